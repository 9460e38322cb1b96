from __future__ import annotations

from helixtorque.cli import main

if __name__ == "__main__":
    main()
