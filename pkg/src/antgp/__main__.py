from antgp.cli import main

raise SystemExit(main())
