# === fbac_lab/file_discovery.py ===

import os
from typing import List, Sequence

REPORT_NAME = "report.json"


def discover_reports(paths: Sequence[str]) -> List[str]:
    """
    Expands report arguments: files are taken as given, directories are walked
    recursively for report.json files. Result is sorted and free of duplicates.
    """
    found = []
    for path in paths:
        if os.path.isfile(path):
            found.append(os.path.abspath(path))
            continue
        for dirpath, dirnames, filenames in os.walk(path):
            dirnames.sort()
            if REPORT_NAME in filenames:
                found.append(os.path.abspath(os.path.join(dirpath, REPORT_NAME)))
    return sorted(set(found))
