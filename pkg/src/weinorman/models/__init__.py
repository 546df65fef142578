"""Population models with closed Lie algebras: birth-death, cohort epidemic, pure birth."""
