#!/usr/bin/env python3
from cli.commands import main

if __name__ == "__main__":
    main()
