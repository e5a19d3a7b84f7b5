from ginet.cli import main
import sys
sys.exit(main())
