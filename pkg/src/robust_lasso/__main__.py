import sys

from robust_lasso.bench.cli import main

if __name__ == '__main__':
    sys.exit(main())
