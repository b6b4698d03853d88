"""
Terminal colors and number formatting for lab reports.

Usage:
    from ui_helpers import format_verdict, print_success

    print(format_verdict(row.passed))
    print_success("Rate curve certification: PASS")
"""
from colorama import Fore, Style, init

init(autoreset=True)


class Colors:
    """Colors for verdicts, notes and table titles."""
    PASS = Fore.GREEN
    FAIL = Fore.RED
    SLACK = Fore.YELLOW
    NOTE = Fore.CYAN
    RATIO = Fore.MAGENTA
    TITLE = Style.BRIGHT


def _paint(text: str, color: str) -> str:
    return f"{color}{text}{Style.RESET_ALL}"


def error(text: str) -> str:
    """Red text."""
    return _paint(text, Colors.FAIL)


def warning(text: str) -> str:
    """Yellow text."""
    return _paint(text, Colors.SLACK)


def info(text: str) -> str:
    """Cyan text."""
    return _paint(text, Colors.NOTE)


def highlight(text: str) -> str:
    """Magenta text, used for competitive ratios."""
    return _paint(text, Colors.RATIO)


def format_verdict(passed: bool, colored: bool = True) -> str:
    """PASS in green or FAIL in red."""
    text = "PASS" if passed else "FAIL"
    if not colored:
        return text
    return _paint(text, Colors.PASS if passed else Colors.FAIL)


def format_margin(margin: float, digits: int = 6, colored: bool = True) -> str:
    """
    Format a rate margin g(y) - estimate.

    Non-negative margins are green, negative ones yellow (a negative
    margin can still pass within the sigma slack).
    """
    formatted = f"{margin:+.{digits}f}"
    if not colored:
        return formatted
    return _paint(formatted, Colors.PASS if margin >= 0 else Colors.SLACK)


def format_float(value: float, digits: int = 6) -> str:
    """Fixed-point float; nan prints as '-'."""
    if value != value:
        return "-"
    return f"{value:.{digits}f}"


def print_header(text: str):
    print(f"\n{_paint(text, Colors.TITLE)}")
    print(_paint("=" * len(text), Colors.TITLE))


def print_subheader(text: str):
    print(f"\n{info(text)}")
    print(info("-" * len(text)))


def print_success(text: str):
    print(_paint(f"✓ {text}", Colors.PASS))


def print_error(text: str):
    print(error(f"✗ {text}"))


def print_warning(text: str):
    print(warning(f"⚠ {text}"))


def print_info(text: str):
    print(info(f"ℹ {text}"))
