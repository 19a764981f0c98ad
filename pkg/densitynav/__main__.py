"""Entry point for `python -m densitynav`."""

if __name__ == "__main__":
    from densitynav.cli import cli

    cli()
