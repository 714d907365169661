from mvopl.cli import main

raise SystemExit(main())
