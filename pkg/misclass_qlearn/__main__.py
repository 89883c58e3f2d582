"""Allow running the package as a module: python -m misclass_qlearn."""

from misclass_qlearn.cli import app

if __name__ == "__main__":
    app()
