# graspforge/cli.py
"""
`graspforge <subcommand> [options]`: the console entry point. Subcommands
are the project's management commands with hyphens instead of underscores.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import os
import sys
from typing import List, Optional, Sequence, TextIO

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

# subcommand -> (app label, command module)
SUBCOMMANDS = {
    "train-rl": ("learning", "train_rl"),
    "gen-data": ("datagen", "gen_data"),
    "train-bc": ("learning", "train_bc"),
    "eval": ("learning", "eval"),
    "experiment": ("learning", "experiment"),
    "render": ("sim", "render"),
    "config": ("core", "config"),
    "inspect-data": ("datagen", "inspect_data"),
    "plot-metrics": ("learning", "plot_metrics"),
}


def _setup() -> None:
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "graspforge.settings")
    import django

    django.setup()


def usage() -> str:
    from django.core.management import load_command_class

    lines = ["usage: graspforge <subcommand> [options]", "", "subcommands:"]
    for sub, (app, name) in SUBCOMMANDS.items():
        help_text = load_command_class(app, name).help
        lines.append(f"  {sub:<14} {help_text}")
    lines += ["", "Run `graspforge <subcommand> --help` for the options of one subcommand."]
    return "\n".join(lines)


def main(
    argv: Optional[Sequence[str]] = None,
    stdout: Optional[TextIO] = None,
    stderr: Optional[TextIO] = None,
) -> int:
    args: List[str] = list(sys.argv[1:] if argv is None else argv)
    err = stderr or sys.stderr
    _setup()

    from django.core.management import load_command_class
    from django.core.management.base import CommandError, handle_default_options

    if args and args[0] in ("-h", "--help", "help"):
        (stdout or sys.stdout).write(usage() + "\n")
        return EXIT_OK
    if not args or args[0] not in SUBCOMMANDS:
        if args:
            err.write(f"graspforge: unknown subcommand {args[0]!r}\n")
        err.write(usage() + "\n")
        return EXIT_USAGE

    sub, rest = args[0], args[1:]
    app, name = SUBCOMMANDS[sub]
    command = load_command_class(app, name)
    command.invocation_argv = ["graspforge", *args]
    command._called_from_command_line = True
    parser = command.create_parser("graspforge", sub)
    try:
        options = parser.parse_args(rest)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    handle_default_options(options)
    cmd_options = vars(options)
    positional = cmd_options.pop("args", ())
    if stdout is not None:
        cmd_options["stdout"] = stdout
    if stderr is not None:
        cmd_options["stderr"] = stderr
    try:
        command.execute(*positional, **cmd_options)
    except CommandError as e:
        err.write(f"graspforge {sub}: error: {e}\n")
        return e.returncode if e.returncode in (EXIT_USAGE, EXIT_RUNTIME) else EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
