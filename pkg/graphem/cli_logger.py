import logging

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

_console = Console(highlight=False)


def setup_logging(level="WARNING"):
    """Route the package loggers through rich. Safe to call more than once."""
    root = logging.getLogger("graphem")
    root.setLevel(str(level).upper())
    if not any(isinstance(h, RichHandler) for h in root.handlers):
        root.addHandler(RichHandler(console=Console(stderr=True), show_path=False))
    root.propagate = False
    return root


class CLIPrinter:
    def __init__(self, quiet=False):
        self.quiet = quiet

    def _print(self, msg, style=None):
        if not self.quiet:
            _console.print(msg, style=style)

    def info(self, msg): self._print(f"→ {msg}")
    def success(self, msg): self._print(f"✅ {msg}", style="green")
    def section(self, title): self._print(f"\n📦 {title}", style="bold")
    def save(self, path): self._print(f"💾 Saving output → {path}")
    def warn(self, msg): self._print(f"⚠️  {msg}", style="yellow")
    def error(self, msg): self._print(f"❌ {msg}", style="red")

    def done(self, msg="Operation completed!"):
        self._print(f"✅ {msg}\n", style="bold green")

    def table(self, frame, title=None, float_format="{:.4f}"):
        """Render a pandas DataFrame as a rich table."""
        if self.quiet:
            return
        table = Table(title=title)
        for col in frame.columns:
            table.add_column(str(col), justify="right")
        for _, row in frame.iterrows():
            table.add_row(*[float_format.format(v) if isinstance(v, float) else str(v) for v in row])
        _console.print(table)
