from .commands import cmd_check, cmd_fit
from .runconfig import RunConfig, build_run_config
from .simulate import SimScenario, draw_dataset, simulate_dataset
