from __future__ import annotations

import argparse
from typing import Dict, List, Type

from ..config import RunConfig


class Command:
    """Base class for all sub-commands."""

    name: str = "command"
    help: str = ""

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        pass

    def run(self, args: argparse.Namespace, config: RunConfig) -> int:
        raise NotImplementedError


class CommandRegistry:
    """Registry for all sub-commands so the CLI can discover and dispatch them."""

    _registry: Dict[str, Type[Command]] = {}

    @classmethod
    def register(cls, command_cls: Type[Command]):
        if not issubclass(command_cls, Command):
            raise TypeError("command_cls must subclass Command")
        cls._registry[command_cls.name] = command_cls
        return command_cls

    @classmethod
    def get(cls, name: str) -> Type[Command]:
        return cls._registry[name]

    @classmethod
    def list_commands(cls) -> List[Type[Command]]:
        return list(cls._registry.values())

    @classmethod
    def run(cls, name: str, args: argparse.Namespace, config: RunConfig) -> int:
        return cls.get(name)().run(args, config)


__all__ = ["Command", "CommandRegistry"]
