import sys

from src.cli.commands import main
from src.exception import CustomException
from src.logger import logging


if __name__ == "__main__":
    try:
        status = main()
    except Exception as e:
        logging.error(f"Error in main process: {e}")
        raise CustomException(e, sys)
    sys.exit(status)
