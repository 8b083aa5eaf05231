from alaas.client.sdk import ALClient, ClientConfig, expand_directory

__all__ = ["ALClient", "ClientConfig", "expand_directory"]
