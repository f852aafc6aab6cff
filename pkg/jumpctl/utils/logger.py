import os
import csv
import math

from .serialization import mkdir


def _format(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return '' if math.isnan(value) else repr(value)
    return value


class CsvLogger:
    '''
        streams rows to a csv file, flushing after each row so a killed
        run still leaves a readable log
    '''

    def __init__(self, savepath, fields):
        mkdir(os.path.dirname(savepath) or '.')
        self.savepath = savepath
        self.fields = list(fields)
        self._file = open(savepath, 'w', newline='')
        self._writer = csv.writer(self._file)
        self._writer.writerow(self.fields)
        self._file.flush()

    def log(self, row):
        unknown = set(row) - set(self.fields)
        assert not unknown, f'[ utils/logger ] unknown columns {sorted(unknown)}'
        self._writer.writerow([_format(row.get(key)) for key in self.fields])
        self._file.flush()

    def close(self):
        if not self._file.closed:
            self._file.close()
            print(f'[ utils/logger ] Saved log to {self.savepath}')

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(savepath, fields, rows):
    with CsvLogger(savepath, fields) as logger:
        for row in rows:
            logger.log(row)
    return savepath


def read_csv(loadpath):
    with open(loadpath, 'r', newline='') as f:
        return list(csv.DictReader(f))
