"""
Command-line entry point running the experiment management commands.

    python -m core.cli <subcommand> [flags]

is equivalent to ``python manage.py <subcommand> [flags]``; ``select-hard``
is accepted for ``select_hard``. The return value is the process exit code:
0 on success, 2 on usage or configuration errors, 3 on data errors.
"""
import os
import sys
from typing import Sequence

SUBCOMMANDS = (
    'datagen',
    'train',
    'sample',
    'eval',
    'select_hard',
    'bench',
    'plot',
)
USAGE = f'usage: core.cli {{{",".join(SUBCOMMANDS)}}} [flags]\n'


def run(argv: Sequence[str]) -> int:
    """Runs one subcommand and returns its exit code"""

    argv = list(argv)
    if not argv or argv[0] in ('-h', '--help'):
        sys.stdout.write(USAGE)
        return 0 if argv else 2
    name = argv[0].replace('-', '_')
    if name not in SUBCOMMANDS:
        sys.stderr.write(USAGE)
        sys.stderr.write(f'error: unknown subcommand {argv[0]!r}\n')
        return 2

    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'app.settings')
    import django
    from django.core.management import load_command_class

    django.setup()
    command = load_command_class('core', name)
    try:
        command.run_from_argv(['manage.py', name, *argv[1:]])
    except SystemExit as exit:
        return exit.code if isinstance(exit.code, int) else 1

    return 0


if __name__ == '__main__':
    sys.exit(run(sys.argv[1:]))
