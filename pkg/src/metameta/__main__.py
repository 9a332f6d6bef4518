from metameta.cli import main

raise SystemExit(main())
