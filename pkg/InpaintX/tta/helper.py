import os

from rich.console import Console
from rich.table import Table

# Check environment variable to determine ANSI color support
no_color = os.getenv("NO_COLOR") is not None

console = Console(color_system=None if no_color else "auto")
error_console = Console(color_system=None if no_color else "auto", stderr=True)


def print_success(message):
    """Prints a message indicating success in green color."""
    console.print(f"[bold green]{message}[/bold green]")


def print_error(message):
    """Prints a one-line error to stderr in red color."""
    error_console.print(str(message), style="bold red", markup=False, highlight=False, soft_wrap=True)


def print_info(message):
    """Prints an informational message in blue color."""
    console.print(f"[bold blue]{message}[/bold blue]")


def format_value(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def print_table(title, columns, rows):
    """Renders a report as a rich table; ``rows`` are sequences aligned with ``columns``."""
    table = Table(title=title)
    for column in columns:
        table.add_column(str(column))
    for row in rows:
        table.add_row(*(format_value(value) for value in row))
    console.print(table)
