import argparse
import sys
from collections import namedtuple

from fog_observability.utils import path_resolver
from fog_observability.utils.structured import dumps_line, to_plain


def add_config_args(parser):
    parser.add_argument('--config', type=str, default=None, dest='config_path',
                        help='YAML or `key = value` configuration file. By default using the built-in defaults')
    parser.add_argument('--set', type=str, action='append', default=[], dest='overrides', metavar='KEY=VALUE',
                        help='Override one configuration key, e.g. --set staging.capacity_bytes=1048576')
    parser.add_argument('--log-level', type=str, default=None, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Console and file log level. By default using logging.level')


def add_profile_arg(parser, dest='weights', flag='--weights'):
    profiles = path_resolver.get_profile_names()
    parser.add_argument(flag, type=str, default=None, dest=dest, metavar='PROFILE',
                        help='Weight profile name or YAML path. Choices: ' + ', '.join(profiles))


def add_window_args(parser, required=False):
    parser.add_argument('--start', type=int, default=None, required=required, help='Window start, epoch ms')
    parser.add_argument('--end', type=int, default=None, required=required, help='Window end (exclusive), epoch ms')


def parse_window(text):
    """`<start_ms>:<end_ms>` as two ints."""
    try:
        start, end = text.split(':', 1)
        return int(start), int(end)
    except ValueError:
        raise argparse.ArgumentTypeError(f'Window must look like <start_ms>:<end_ms>, got {text!r}')


def emit(obj, stream=None):
    """Machine-readable output: one structured-text line."""
    stream = stream or sys.stdout
    stream.write(dumps_line(to_plain(obj)) + '\n')
    stream.flush()


Command = namedtuple('Command', ['name', 'fn', 'parser_fn', 'group'])
ODLC_COMMANDS = []


def register_command(parser_factory, *, name=None, group=None):
    """Registers a plugin subcommand; with `group` it becomes `odlc <group> <name>`."""
    def _register_inner(func):
        command_name = name or func.__name__
        ODLC_COMMANDS.append(Command(command_name, func, parser_factory, group))
        return func
    return _register_inner
