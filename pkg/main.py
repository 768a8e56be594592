"""
Covsel Launcher - Main Entry Point

Run a covsel subcommand, or list them when called without arguments.
"""

import sys

from covsel import __version__
from covsel.cli import dispatch


class Launcher:
    """
    Front door for the command-line tools.
    """

    RULE_WIDTH = 60

    def __init__(self):
        self.commands = [
            {
                'name': 'threshold',
                'description': 'Soft-threshold a covariance or sample file',
            },
            {
                'name': 'embed',
                'description': 'Chordal embedding and clique statistics of a pattern',
            },
            {
                'name': 'solve',
                'description': 'Max-det completion of a thresholded matrix',
            },
            {
                'name': 'estimate',
                'description': 'Threshold, embed and solve in one run',
            },
            {
                'name': 'check',
                'description': 'Dense exactness and optimality diagnostics',
            },
            {
                'name': 'bench',
                'description': 'Banded scaling study and graph case study',
            },
        ]

    def print_menu(self):
        """Print the available subcommands."""
        print("=" * self.RULE_WIDTH)
        print(f"  COVSEL v{__version__}")
        print("=" * self.RULE_WIDTH)
        for command in self.commands:
            print(f"  {command['name']:<10} {command['description']}")
        print("-" * self.RULE_WIDTH)
        print("  python main.py <command> --help")
        print("=" * self.RULE_WIDTH)

    def run(self, argv):
        """
        Dispatch argv, or print the menu when it is empty.

        Returns:
            int: process exit code
        """
        if not argv:
            self.print_menu()
            return 0
        return dispatch(argv)


def main():
    """Main entry point."""
    launcher = Launcher()
    sys.exit(launcher.run(sys.argv[1:]))


if __name__ == "__main__":
    main()
