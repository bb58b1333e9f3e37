"""
Subcommands of the cogmask CLI; each module exposes register() and handle()
"""
from cogmask.cli.commands import detect, irl, mask, run

COMMANDS = (run, irl, mask, detect)
