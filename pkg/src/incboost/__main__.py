"""Module entry point for python -m incboost."""

from incboost.cli import main


if __name__ == "__main__":
    raise SystemExit(main())
