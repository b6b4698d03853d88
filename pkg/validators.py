"""
Input validation for experiment parameters.

This module provides centralized validation for user-supplied numbers
(probabilities, tolerances, seeds, trial counts, grids), ensuring that
invalid data is caught early with clear error messages.

Usage:
    from validators import InputValidator, ValidationError

    try:
        p = InputValidator.validate_probability(user_input, field="f")
        trials = InputValidator.validate_trials(10000)
        grid = InputValidator.validate_grid("0:1:0.01")
    except ValidationError as e:
        print(f"Invalid input: {e}")
"""

import logging
import math
from typing import List, Optional

# Absolute slack accepted on probabilities and per-step mass.
PROBABILITY_TOL = 1e-12


class ValidationError(Exception):
    """
    Exception raised when input validation fails.

    Attributes:
        message: Human-readable description of the validation failure.
        field: Optional name of the field that failed validation.
        value: Optional value that was rejected.
    """

    def __init__(self, message: str, field: Optional[str] = None, value=None):
        self.message = message
        self.field = field
        self.value = value
        super().__init__(self.message)

    def __str__(self) -> str:
        if self.field:
            return f"{self.field}: {self.message}"
        return self.message


class InputValidator:
    """
    Centralized input validation.

    All methods are static. Each returns the coerced value if valid or
    raises ValidationError.

    Example:
        >>> InputValidator.validate_probability(0.25)
        0.25

        >>> InputValidator.validate_probability(1.2)
        ValidationError: probability: Probability must be in [0, 1]
    """

    @staticmethod
    def _as_float(value, field: str) -> float:
        try:
            number = float(value)
        except (TypeError, ValueError):
            raise ValidationError(
                f"Must be a valid number, got: {type(value).__name__}",
                field=field,
                value=value
            )
        if math.isnan(number):
            raise ValidationError("Must not be NaN", field=field, value=value)
        return number

    @staticmethod
    def validate_probability(value, field: str = "probability",
                             tol: float = PROBABILITY_TOL) -> float:
        """
        Validate a probability, allowing `tol` slack at both ends.

        Values inside the slack are clamped to [0, 1].

        Example:
            >>> InputValidator.validate_probability(1.0 + 1e-13)
            1.0
        """
        p = InputValidator._as_float(value, field)
        if p < -tol or p > 1.0 + tol:
            raise ValidationError(
                "Probability must be in [0, 1]",
                field=field,
                value=value
            )
        return min(max(p, 0.0), 1.0)

    @staticmethod
    def validate_non_negative(value, field: str = "value") -> float:
        """Validate a finite number >= 0."""
        number = InputValidator._as_float(value, field)
        if number < 0 or math.isinf(number):
            raise ValidationError(
                "Must be a finite non-negative number",
                field=field,
                value=value
            )
        return number

    @staticmethod
    def validate_positive(value, field: str = "value") -> float:
        """Validate a finite number > 0 (budgets, vertex weights)."""
        number = InputValidator._as_float(value, field)
        if number <= 0 or math.isinf(number):
            raise ValidationError(
                "Must be a finite positive number",
                field=field,
                value=value
            )
        return number

    @staticmethod
    def validate_tolerance(value, field: str = "tol") -> float:
        """
        Validate a numeric tolerance.

        Example:
            >>> InputValidator.validate_tolerance("1e-9")
            1e-09
        """
        tol = InputValidator._as_float(value, field)
        if tol <= 0 or tol >= 1:
            raise ValidationError(
                "Tolerance must be in (0, 1)",
                field=field,
                value=value
            )
        return tol

    @staticmethod
    def validate_seed(value, field: str = "seed") -> int:
        """Validate a non-negative integer seed."""
        try:
            seed = int(value)
        except (TypeError, ValueError):
            raise ValidationError(
                f"Seed must be a valid integer, got: {type(value).__name__}",
                field=field,
                value=value
            )
        if seed < 0:
            raise ValidationError("Seed must be non-negative", field=field, value=value)
        return seed

    @staticmethod
    def validate_trials(value, max_trials: int = 10 ** 8) -> int:
        """
        Validate a Monte Carlo trial count.

        Example:
            >>> InputValidator.validate_trials(0)
            ValidationError: trials: Trial count must be at least 1
        """
        try:
            trials = int(value)
        except (TypeError, ValueError):
            raise ValidationError(
                f"Trial count must be a valid integer, got: {type(value).__name__}",
                field="trials",
                value=value
            )
        if trials < 1:
            raise ValidationError("Trial count must be at least 1", field="trials", value=value)
        if trials > max_trials:
            raise ValidationError(
                f"Trial count cannot exceed {max_trials}",
                field="trials",
                value=value
            )
        return trials

    @staticmethod
    def validate_eta(value) -> float:
        """Validate the Type Decomposition offset, which lives in [0, 1/2)."""
        eta = InputValidator._as_float(value, "eta")
        if eta < 0 or eta >= 0.5:
            raise ValidationError("eta must be in [0, 0.5)", field="eta", value=value)
        return eta

    @staticmethod
    def validate_allocation_level(value, field: str = "y") -> float:
        """Validate a cumulative allocation y >= 0."""
        return InputValidator.validate_non_negative(value, field)

    @staticmethod
    def validate_grid(text: str) -> List[float]:
        """
        Parse a `start:stop:step` grid, stop inclusive.

        Example:
            >>> InputValidator.validate_grid("0:1:0.25")
            [0.0, 0.25, 0.5, 0.75, 1.0]
        """
        if not isinstance(text, str) or text.count(':') != 2:
            raise ValidationError(
                "Grid must be in format 'start:stop:step'",
                field="grid",
                value=text
            )
        start, stop, step = (InputValidator._as_float(part, "grid") for part in text.split(':'))
        if step <= 0:
            raise ValidationError("Grid step must be positive", field="grid", value=text)
        if stop < start:
            raise ValidationError("Grid stop must be >= start", field="grid", value=text)
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        if count > 10 ** 6:
            raise ValidationError("Grid has too many points", field="grid", value=text)
        points = [round(start + k * step, 12) for k in range(count)]
        logging.debug(f"Parsed grid {text} into {len(points)} points")
        return points

    @staticmethod
    def validate_choice(value: str, choices, field: str) -> str:
        """Validate a case-insensitive enumerated string."""
        if not isinstance(value, str):
            raise ValidationError(
                f"Must be a string, got: {type(value).__name__}",
                field=field,
                value=value
            )
        normalized = value.strip().lower()
        allowed = [c.lower() for c in choices]
        if normalized not in allowed:
            raise ValidationError(
                f"Must be one of: {', '.join(allowed)}",
                field=field,
                value=value
            )
        return normalized
