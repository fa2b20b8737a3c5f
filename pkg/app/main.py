import click

from app.core.config import settings
from app.cli import experiments


@click.group(help="Numerical experiments on contact sub-Riemannian Laplacians.")
@click.version_option(settings.VERSION, prog_name=settings.APP_NAME)
def cli():
    pass


for command in experiments.COMMANDS:
    cli.add_command(command)


if __name__ == "__main__":
    cli()
