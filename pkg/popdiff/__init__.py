"""📐 popdiff: популярные разности для матричных паттернов над (F_p^n)^k."""

__version__ = "0.3.0"
