"""Permite executar o CLI com `python -m eeatc`."""

from .cli import main

if __name__ == "__main__":
    main()
