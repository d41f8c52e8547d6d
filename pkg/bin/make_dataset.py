import click

from InpaintX.tta.data import TextureFamily, build_dataset


@click.command()
@click.argument('out_dir', type=click.Path(file_okay=False))
@click.option('--count', type=click.IntRange(1), default=64, show_default=True, help='Number of textures')
@click.option('--size', type=click.IntRange(8), default=64, show_default=True, help='Texture side in pixels')
@click.option('--seed', type=int, default=0, show_default=True, help='Dataset seed')
@click.option(
    '--family',
    'families',
    type=click.Choice([f.value for f in TextureFamily]),
    multiple=True,
    default=('stripes', 'checker'),
    show_default=True,
    help='Texture family (repeatable)',
)
def make_dataset(out_dir, count, size, seed, families):
    # Renders images/<family>_<k>.png plus manifest.tsv for `inpaintx train` / `inpaintx eval`
    entries = build_dataset(out_dir, count, size, seed, families)
    click.echo(f"{len(entries)} textures written to {out_dir}")


if __name__ == '__main__':
    make_dataset()
