from InpaintX.cli.command import inpaintx_cli

if __name__ == "__main__":
    inpaintx_cli(obj={})
