import sys

from peiv_estimation.cli.app import main


if __name__ == "__main__":
    sys.exit(main())
