"""Mapping live code objects to dotted wire identities.

Python 3.10 code objects carry no qualified name, so identities come from a
per-file AST scan: every function or method definition is indexed by the
first line of its compiled code object (the ``def`` line, or the first
decorator line when decorated). The class path is the module's dotted path
plus any enclosing class names; nesting inside functions does not extend it.
"""
from __future__ import annotations

import ast
import logging
from dataclasses import dataclass
from pathlib import Path
from types import CodeType
from typing import Iterable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CodeInfo:
    """Wire identity of one function or method definition."""

    class_path: str
    member: str
    signature: str
    file: str
    def_line: int


def module_path_for(file: Path, workspace: Path) -> str | None:
    """Dotted module path of a project file, or None when it has none.

    ``workspace`` must already be resolved. Files outside the workspace,
    non-Python files, and paths with non-identifier components are rejected;
    a package's ``__init__.py`` maps to the package path itself.
    """
    try:
        rel = file.resolve().relative_to(workspace)
    except (ValueError, OSError):
        return None
    if rel.suffix != ".py":
        return None
    parts = list(rel.with_suffix("").parts)
    if parts and parts[-1] == "__init__":
        parts.pop()
    if not parts or not all(part.isidentifier() for part in parts):
        return None
    return ".".join(parts)


def _signature(args: ast.arguments) -> str:
    parts = [a.arg for a in [*args.posonlyargs, *args.args]]
    if args.vararg is not None:
        parts.append("*" + args.vararg.arg)
    elif args.kwonlyargs:
        parts.append("*")
    parts.extend(a.arg for a in args.kwonlyargs)
    if args.kwarg is not None:
        parts.append("**" + args.kwarg.arg)
    return "(" + ", ".join(parts) + ")"


def scan_source(source: str, module_path: str, rel_file: str) -> dict[int, CodeInfo]:
    """Index every function definition by its code object's first line.

    For decorated definitions the compiled first line is the first decorator
    line; the emitted ``def_line`` is always the ``def`` statement itself.
    """
    table: dict[int, CodeInfo] = {}

    def walk(node: ast.AST, class_stack: tuple[str, ...]) -> None:
        for child in ast.iter_child_nodes(node):
            if isinstance(child, ast.ClassDef):
                walk(child, class_stack + (child.name,))
            elif isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                info = CodeInfo(
                    class_path=".".join([module_path, *class_stack]),
                    member=child.name,
                    signature=_signature(child.args),
                    file=rel_file,
                    def_line=child.lineno,
                )
                first_line = min(
                    (decorator.lineno for decorator in child.decorator_list),
                    default=child.lineno,
                )
                table.setdefault(first_line, info)
                walk(child, class_stack)
            else:
                walk(child, class_stack)

    walk(ast.parse(source), ())
    return table


class QualnameResolver:
    """Resolves code objects against lazily built per-file AST tables.

    Files outside the workspace and explicitly excluded files (the loaded
    test modules) resolve to nothing, which is how framework internals and
    the tests themselves stay out of the trace.
    """

    def __init__(self, workspace: Path, excluded_files: Iterable[Path] = ()) -> None:
        self.workspace = Path(workspace).resolve()
        self._excluded = {str(Path(path).resolve()) for path in excluded_files}
        self._tables: dict[str, dict[int, CodeInfo] | None] = {}

    def lookup(self, code: CodeType) -> CodeInfo | None:
        if code.co_name.startswith("<"):
            return None  # module bodies, lambdas, comprehensions
        table = self._table_for(code.co_filename)
        if table is None:
            return None
        return table.get(code.co_firstlineno)

    def _table_for(self, filename: str) -> dict[int, CodeInfo] | None:
        if filename in self._tables:
            return self._tables[filename]
        table = self._build_table(filename)
        self._tables[filename] = table
        return table

    def _build_table(self, filename: str) -> dict[int, CodeInfo] | None:
        path = Path(filename)
        try:
            resolved = path.resolve()
        except OSError:
            return None
        if str(resolved) in self._excluded:
            return None
        module_path = module_path_for(path, self.workspace)
        if module_path is None:
            return None
        rel_file = resolved.relative_to(self.workspace).as_posix()
        try:
            source = resolved.read_text(encoding="utf-8")
            return scan_source(source, module_path, rel_file)
        except (OSError, UnicodeDecodeError, SyntaxError) as exc:
            logger.warning("cannot index %s: %s", filename, exc)
            return None
