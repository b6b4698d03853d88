"""
Pydantic schemas for the lab's JSON reports.

This module contains Pydantic models that define the structure of the
summaries, verdicts and check reports the CLI writes. These schemas are
used to:

1. Validate report dictionaries produced in tests
2. Document the expected report format
3. Catch accidental format changes early

Usage:
    from tests.schemas.report_schemas import SummaryReport

    # Validate a summary
    validated = SummaryReport(**summary.to_dict())
"""
