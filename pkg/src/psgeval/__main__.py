from psgeval.cli import main
import sys

sys.exit(main())
