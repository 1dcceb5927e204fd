"""Command line front end built with click."""

import click

from .core import parse_many


@click.command()
@click.argument("path")
def main(path):
    with open(path) as fh:
        for record in parse_many(fh):
            click.echo(record["message"])
