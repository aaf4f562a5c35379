# main.py
# Application entry point wiring the layers together

import sys
from pathlib import Path
from typing import List, Optional

# Add project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from business_logic.verification_pipeline import VerificationPipeline
from config.settings import AppConfig, LoggingConfig
from data_access.metric_repository import MetricRepository
from data_access.report_store import ReportStore
from presentation.console_ui import ConsoleUI, build_parser
from presentation.report_formatter import ReportFormatter
from utilities.logger import get_logger, setup_logging


class GeodesicMappingApplication:
    """
    Main application class
    Builds the data access, business and presentation layers and runs one command
    """

    def __init__(self):
        self.logger = None
        self.repository = None
        self.pipeline = None
        self.console_ui = None

    def initialize(self, log_file: Optional[str] = None, quiet: bool = False) -> bool:
        """Set up logging and construct every layer"""
        try:
            setup_logging(log_file=log_file, level=LoggingConfig.LOG_LEVEL, quiet=quiet)
            self.logger = get_logger(__name__)
            self.logger.debug(f"Starting {AppConfig.APP_NAME} v{AppConfig.VERSION}")

            self.repository = MetricRepository()
            self.pipeline = VerificationPipeline(self.repository, ReportStore())
            self.console_ui = ConsoleUI(self.pipeline, ReportFormatter())
            return True

        except Exception as e:
            if self.logger:
                self.logger.error(f"Failed to initialize application: {e}")
            else:
                print(f"Critical error during initialization: {e}", file=sys.stderr)
            return False

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = build_parser().parse_args(argv)
        if not self.initialize(log_file=args.log_file, quiet=args.quiet):
            return AppConfig.EXIT_ERROR
        try:
            return self.console_ui.execute(args)
        except KeyboardInterrupt:
            self.logger.info("Interrupted by user")
            return AppConfig.EXIT_ERROR
        except Exception as e:
            self.logger.error(f"Unexpected error: {e}", exc_info=True)
            return AppConfig.EXIT_ERROR
        finally:
            self.shutdown()

    def shutdown(self):
        if self.logger:
            self.logger.debug(f"{AppConfig.APP_NAME} finished")


def main(argv: Optional[List[str]] = None) -> int:
    app = GeodesicMappingApplication()
    return app.run(argv)


if __name__ == "__main__":
    sys.exit(main())
