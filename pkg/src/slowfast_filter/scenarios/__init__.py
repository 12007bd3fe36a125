from .catalog import SCENARIO_CATALOG
from .template_engine import ScenarioTemplateEngine

__all__ = ["SCENARIO_CATALOG", "ScenarioTemplateEngine"]
