import hashlib
import logging
import os
import sys
import traceback
from datetime import datetime, timedelta
from typing import TextIO

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())


class RunLogger:
    """
    Per-run logger of the command line tool.
    Progress and errors go to `logs/{project_name}.log`; one-line diagnostics are echoed to stderr.
    Identical errors raised within two minutes are written only once.
    """

    def __init__(self, project_name: str = 'silt-lab', log_dir: str = 'logs', stream: TextIO | None = None) -> None:
        self.project_name = project_name
        self.log_dir = log_dir
        self.stream = stream if stream is not None else sys.stderr
        self.last_messages = []
        self.attached = []

        # create logs directory if not exists
        if not os.path.exists(log_dir):
            os.makedirs(log_dir)
        self.log_path = os.path.join(log_dir, f"{project_name}.log")

        self.file_logger = logging.getLogger(f"silt_lab.run.{project_name}")
        self.file_logger.setLevel(logging.INFO)
        self.file_logger.propagate = False
        if not any(getattr(h, 'baseFilename', None) == os.path.abspath(self.log_path)
                   for h in self.file_logger.handlers):
            handler = logging.FileHandler(self.log_path, encoding='utf-8')
            handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(message)s'))
            self.file_logger.addHandler(handler)

    @staticmethod
    def hash_error(error_text):
        return hashlib.md5(error_text.encode()).hexdigest()

    def save_error(self, error_text: str, message: str) -> None:
        self.last_messages.append({
            'date': datetime.now().replace(microsecond=0),
            'message_hash': self.hash_error(error_text)
        })
        self.file_logger.error(f"ERROR in {message}\n{error_text}")

    def error(self, exc: Exception, header_message: str, error_additional_data=None) -> None:
        """
        :param exc: the exception, its traceback goes to the log file only.
        :param header_message: where the error occurred, e.g. the subcommand name.
        :param error_additional_data: additional data appended to the log entry, like the run config.
        :return: None
        """
        print(f"{self.project_name}: error: {exc}", file=self.stream)

        error_text = ''.join(traceback.format_exception(None, exc, exc.__traceback__))
        if error_additional_data:
            error_text += f"\n\nAdditional data:\n{error_additional_data}"
        error_text_hash = self.hash_error(error_text)

        two_minutes_ago = datetime.now() - timedelta(minutes=2)
        self.last_messages = [item for item in self.last_messages if item.get('date') > two_minutes_ago]

        last_messages_hashes = [item.get('message_hash') for item in self.last_messages]

        if error_text_hash in last_messages_hashes:
            return

        self.save_error(error_text, header_message)

    def info(self, message: str, echo: bool = False) -> None:
        self.file_logger.info(message)
        if echo:
            print(message, file=self.stream)

    def attach(self, logger_name: str = 'silt_lab', level: int = logging.INFO) -> None:
        """Route a library logger (progress, cache hits) into the run log file."""
        library_logger = logging.getLogger(logger_name)
        library_logger.setLevel(level)
        for handler in self.file_logger.handlers:
            if handler not in library_logger.handlers:
                library_logger.addHandler(handler)
        self.attached.append(library_logger)

    def close(self) -> None:
        for handler in list(self.file_logger.handlers):
            for library_logger in self.attached:
                library_logger.removeHandler(handler)
            handler.close()
            self.file_logger.removeHandler(handler)
        self.attached = []
