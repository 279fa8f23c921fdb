from __future__ import annotations

import logging
import sys
from typing import Optional, Sequence

from config import load_config
from osmoid.cli import main as cli_main


def main(argv: Optional[Sequence[str]] = None) -> int:
    app_config = load_config()
    logging.basicConfig(
        level=app_config.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return cli_main(argv, app_config)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        sys.exit(130)
