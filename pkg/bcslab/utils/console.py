import logging
import sys
from typing import Any, Dict, Iterable, Optional

from rich import box
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from tqdm import tqdm

from .config import Config

console = Console(stderr=True)


def setup_logging(level: Optional[str] = None) -> None:
    """Route every bcslab logger through a rich handler on stderr"""
    logging.basicConfig(
        level=(level or Config.LOG_LEVEL).upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=False, show_path=False)],
        force=True,
    )


def log_run_start(command: str, settings: Dict[str, Any]):
    """Log run start"""
    lines = [f"[bold]{key}[/bold]: {value}" for key, value in settings.items() if value is not None]
    panel = Panel(
        "\n".join(lines) or "defaults",
        title=f"[bold blue]bcslab {command}[/bold blue]",
        border_style="blue",
        box=box.ROUNDED,
    )
    console.print(panel)


def log_summary(title: str, rows: Dict[str, Any]):
    """Log a two-column result table"""
    table = Table(title=title, box=box.SIMPLE)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="green")
    for key, value in rows.items():
        if isinstance(value, float):
            value = f"{value:.6e}"
        table.add_row(key, str(value))
    console.print(table)


def log_failure(command: str, message: str, exit_code: int):
    """Log a failed run"""
    panel = Panel(
        f"[bold]{message}[/bold]\nexit code {exit_code}",
        title=f"[bold red]bcslab {command} failed[/bold red]",
        border_style="red",
        box=box.ROUNDED,
    )
    console.print(panel)


def progress(iterable: Iterable, total: int, desc: str, quiet: bool = False):
    """Progress bar on stderr, silent when stderr is not a terminal"""
    return tqdm(
        iterable,
        total=total,
        desc=desc,
        file=sys.stderr,
        disable=quiet or not sys.stderr.isatty(),
        leave=False,
    )
