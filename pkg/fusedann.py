"""Application entry point."""
from core.cli import cli


if __name__ == "__main__":
    cli()
