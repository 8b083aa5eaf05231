from alaas.server.app import create_app, serve
from alaas.server.config import ServiceConfig, load_config, parse_config
from alaas.server.jobs import JobManager, JobRecord

__all__ = ["JobManager", "JobRecord", "ServiceConfig", "create_app", "load_config", "parse_config", "serve"]
