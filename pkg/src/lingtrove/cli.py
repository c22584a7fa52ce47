"""Operator command line: ingest corpora, publish and merge roots, manage
consent sessions, run the service, align transcripts, and a terminal
gap-fill loop for smoke testing.

Machine-consumable output (CIDs, fingerprints) goes to stdout one item per
line; human detail goes to stderr. Randomized commands accept --seed.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click

from . import align as align_mod
from . import consent, game, ingest
from .cas import LocalStore, GatewayStore, NameRegistry, TieredStore
from .datamodel import (
    LanguageTree,
    RootIndex,
    decode,
    encode,
    merge_roots,
    store_tree,
    validate_tree,
)
from .errors import LingtroveError

CONFIG_ENV = "LINGTROVE_CONFIG"
STORE_ENV = "LINGTROVE_STORE"
GATEWAY_ENV = "LINGTROVE_GATEWAY"


class Env:
    def __init__(self, store_dir: Path, gateway_url: str | None):
        self.store_dir = store_dir
        self.local = LocalStore(store_dir)
        gateway = GatewayStore(gateway_url) if gateway_url else None
        self.store = TieredStore(self.local, gateway) if gateway else self.local
        self.registry = NameRegistry(store_dir / "names.log")


def _load_env(config_path: str | None, store_dir: str | None) -> Env:
    cfg = {}
    path = config_path or os.environ.get(CONFIG_ENV)
    if path:
        cfg = json.loads(Path(path).read_text("utf-8"))
    directory = store_dir or os.environ.get(STORE_ENV) or cfg.get("store_dir")
    if not directory:
        raise click.UsageError(
            "no store directory: pass --store, set LINGTROVE_STORE, or use a config file")
    gateway = os.environ.get(GATEWAY_ENV) or cfg.get("gateway_url")
    return Env(Path(directory), gateway)


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
@click.option("--store", "store_dir", type=click.Path(), default=None,
              help="Store directory (blocks + name log + identities).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help=f"JSON config file; also via ${CONFIG_ENV}.")
@click.pass_context
def main(ctx, store_dir, config_path):
    ctx.obj = {"store_dir": store_dir, "config_path": config_path}


def _env(ctx) -> Env:
    return _load_env(ctx.obj["config_path"], ctx.obj["store_dir"])


@main.command("ingest")
@click.option("--tsv", required=True, type=click.Path(exists=True))
@click.option("--clips", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--lang", required=True)
@click.option("--cap", default=ingest.DEFAULT_CAP, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--display", default=None, help="Display name (defaults to the code).")
@click.option("--copyright", "copyright_", default="CC0-1.0", show_default=True)
@click.option("--root", "root_cid", default=None,
              help="Extend an existing root instead of starting fresh.")
@click.option("--workers", type=int, default=None)
@click.pass_context
def ingest_cmd(ctx, tsv, clips, lang, cap, seed, display, copyright_, root_cid, workers):
    """Build difficulty buckets from a TSV + clips release; prints the root CID."""
    env = _env(ctx)
    try:
        parsed = ingest.parse_corpus(tsv, clips, lang)
        click.echo(f"{len(parsed.rows)} rows ({parsed.skipped} skipped)", err=True)
        build = ingest.build_buckets(parsed.rows, env.store, cap=cap, seed=seed,
                                     copyright=copyright_, workers=workers)
        tree = ingest.language_tree(build, display=display or lang)
        languages = {lang: tree}
        if root_cid:
            existing = decode(env.store.get(root_cid), RootIndex)
            new_cid = store_tree(env.store, languages)
            merged = merge_roots(decode(env.store.get(new_cid), RootIndex), existing)
            cid = env.store.put(encode(merged))
        else:
            cid = store_tree(env.store, languages)
        sizes = [len(b) for b in build.buckets.buckets]
        click.echo(f"buckets: {sizes} ({build.skipped} clips skipped)", err=True)
    except LingtroveError as exc:
        _fail(str(exc))
    click.echo(cid)


@main.command("publish")
@click.option("--identity", "name", required=True, help="Identity name holding the key.")
@click.option("--cid", "target", required=True)
@click.pass_context
def publish_cmd(ctx, name, target):
    """Point an identity's mutable name at a root CID."""
    env = _env(ctx)
    try:
        identity = consent.load_identity(env.store_dir, name)
        record = env.registry.publish(identity.name_key, target)
    except LingtroveError as exc:
        _fail(str(exc))
    click.echo(f"published sequence {record.sequence} for {name}", err=True)
    click.echo(target)


@main.command("merge")
@click.option("--roots", "cids", required=True, multiple=True)
@click.pass_context
def merge_cmd(ctx, cids):
    """Merge two or more roots (left to right); prints the merged CID."""
    if len(cids) < 2:
        raise click.UsageError("need at least two --roots")
    env = _env(ctx)
    try:
        merged = decode(env.store.get(cids[0]), RootIndex)
        for cid in cids[1:]:
            merged = merge_roots(merged, decode(env.store.get(cid), RootIndex))
        out = env.store.put(encode(merged))
    except LingtroveError as exc:
        _fail(str(exc))
    click.echo(out)


@main.command("validate")
@click.option("--root", "root_cid", required=True)
@click.pass_context
def validate_cmd(ctx, root_cid):
    """Walk a root; print one line per problem, exit nonzero if any."""
    env = _env(ctx)
    report = validate_tree(env.store, root_cid)
    for issue in report.issues:
        click.echo(str(issue))
    if not report.ok():
        sys.exit(1)
    click.echo("ok", err=True)


@main.command("inspect")
@click.option("--root", "root_cid", default=None)
@click.option("--identity", "name", default=None)
@click.pass_context
def inspect_cmd(ctx, root_cid, name):
    """Summarize a root index or a published identity."""
    if (root_cid is None) == (name is None):
        raise click.UsageError("pass exactly one of --root / --identity")
    env = _env(ctx)
    try:
        if root_cid:
            root = decode(env.store.get(root_cid), RootIndex)
            for code, entry in sorted(root.entries.items()):
                click.echo(f"{code}\tbuckets={len(entry.cids)}\tmeta={entry.meta}")
        else:
            opened = consent.open_identity(env.store, env.registry, name)
            if not opened.encrypted:
                click.echo(f"classic root {opened.cid}", err=True)
                for code in sorted(opened.classic_root.entries):
                    click.echo(code)
                return
            for view in opened.sessions:
                if view.status == "open":
                    click.echo(f"{view.fingerprint}\topen\tclips={view.clip_count()}")
                else:
                    click.echo(f"{view.fingerprint}\t{view.status}")
    except LingtroveError as exc:
        _fail(str(exc))


@main.group("keys")
def keys_group():
    """Manage identities and consent session keys."""


@keys_group.command("new")
@click.pass_context
def keys_new(ctx):
    """Create an identity with a fresh session key; prints name, fingerprint."""
    env = _env(ctx)
    identity = consent.create_identity(env.store_dir)
    key = identity.active_key()
    click.echo(" ".join(key.words), err=True)
    click.echo(identity.name)
    click.echo(key.fingerprint)


@keys_group.command("list")
@click.option("--identity", "name", required=True)
@click.pass_context
def keys_list(ctx, name):
    env = _env(ctx)
    try:
        identity = consent.load_identity(env.store_dir, name)
    except LingtroveError as exc:
        _fail(str(exc))
    for fpr, key in sorted(identity.session_keys.items()):
        marker = "active" if fpr == identity.active else "-"
        click.echo(f"{fpr}\t{marker}\t{' '.join(key.words)}")


@keys_group.command("roll")
@click.option("--identity", "name", required=True)
@click.pass_context
def keys_roll(ctx, name):
    """Start a new consent session; prints the new fingerprint."""
    env = _env(ctx)
    try:
        identity = consent.load_identity(env.store_dir, name)
        key = consent.roll_key(identity)
    except LingtroveError as exc:
        _fail(str(exc))
    click.echo(" ".join(key.words), err=True)
    click.echo(key.fingerprint)


@main.command("contribute")
@click.option("--identity", "name", required=True)
@click.option("--audio", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--sentence-cid", required=True)
@click.option("--meta-cid", default=None, help="Derived from the sentence when omitted.")
@click.option("--lang", default=None, help="Defaults to the sentence's language.")
@click.option("--fpr", default=None, help="Session fingerprint (defaults to active).")
@click.pass_context
def contribute_cmd(ctx, name, audio, sentence_cid, meta_cid, lang, fpr):
    """Encrypt a recording under a session key and republish the identity."""
    env = _env(ctx)
    try:
        identity = consent.load_identity(env.store_dir, name)
        fpr = fpr or identity.active
        if not fpr or fpr not in identity.session_keys:
            _fail(f"no local session key {fpr!r}")
        from .datamodel import Sentence, SentenceMeta

        sentence = decode(env.store.get(sentence_cid), Sentence)
        if meta_cid is None:
            tokens = ingest.tokenize(sentence.content)
            meta = SentenceMeta(sentence_cid=sentence_cid, tokens=tuple(tokens),
                                tags=tuple(ingest.tag_tokens(tokens)))
            meta_cid = env.store.put(encode(meta))
        root_cid = consent.contribute(
            identity, identity.session_keys[fpr], lang or sentence.language,
            Path(audio).read_bytes(), sentence_cid, meta_cid,
            env.store, env.registry)
    except LingtroveError as exc:
        _fail(str(exc))
    click.echo(root_cid)


@main.command("revoke")
@click.option("--identity", "name", required=True)
@click.option("--fpr", required=True)
@click.pass_context
def revoke_cmd(ctx, name, fpr):
    """Unpublish a session key; its clips stay listed but become opaque."""
    env = _env(ctx)
    try:
        identity = consent.load_identity(env.store_dir, name)
        root_cid = consent.revoke(identity, fpr, env.store, env.registry)
    except LingtroveError as exc:
        _fail(str(exc))
    click.echo(root_cid)


@main.command("align")
@click.option("--ref", "reference", required=True)
@click.option("--hyp", "hypothesis", required=True)
@click.option("--json", "as_json", is_flag=True, help="Emit feedback segments as JSON.")
def align_cmd(reference, hypothesis, as_json):
    """Align a transcript against a hypothesis; prints Tr/Hyp/Alig rows."""
    if as_json:
        segments = align_mod.feedback(reference, hypothesis)
        click.echo(json.dumps([s.to_jsonable() for s in segments]))
    else:
        click.echo(align_mod.format_rows(reference, hypothesis))


@main.command("serve")
@click.option("--listen", default="127.0.0.1:8080", show_default=True)
@click.option("--root", "root_cid", default=None)
@click.option("--identity", "identity_name", default=None)
@click.option("--contributor", default=None,
              help="Identity for contribution endpoints (defaults to --identity).")
@click.option("--static", "static_dir", type=click.Path(file_okay=False), default=None)
@click.pass_context
def serve_cmd(ctx, listen, root_cid, identity_name, contributor, static_dir):
    """Run the HTTP service."""
    from .service import ServiceConfig, serve

    env = _env(ctx)
    try:
        config = ServiceConfig(
            store_dir=env.store_dir, root_cid=root_cid,
            identity_name=identity_name, contributor_name=contributor,
            listen=listen,
            static_dir=Path(static_dir) if static_dir else None,
            gateway_url=None)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    click.echo(f"serving on http://{listen}", err=True)
    serve(config)


@main.command("play")
@click.option("--root", "root_cid", required=True)
@click.option("--lang", required=True)
@click.option("--bucket", default=0, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--profile", "profile_path", type=click.Path(), default=None)
@click.option("--rounds", default=0, help="Stop after N answers (0 = until EOF/quit).")
@click.pass_context
def play_cmd(ctx, root_cid, lang, bucket, seed, profile_path, rounds):
    """Terminal gap-fill loop. Commands: !skip, !discard, !quit."""
    env = _env(ctx)
    profile = None
    if profile_path and Path(profile_path).exists():
        profile = game.load_profile(profile_path)
    try:
        session = game.new_session(env.store, root_cid, lang, bucket, seed=seed,
                                   profile=profile, profile_path=profile_path)
    except LingtroveError as exc:
        _fail(str(exc))
    answered = 0
    while not rounds or answered < rounds:
        state = session.display_state()
        task = session.current_task()
        shown = ["____" if i == task.gap_index else t for i, t in enumerate(task.tokens)]
        click.echo(f"\nL:{state['L']}  S:{state['S']:.1f}  R:{state['R']}")
        click.echo("  " + " ".join(shown))
        click.echo(f"  [audio {task.clip.clip_cid} | {task.clip.length:.1f}s]", err=True)
        started = time.monotonic()
        try:
            answer = click.prompt("answer", default="", show_default=False)
        except (click.Abort, EOFError):
            break
        if answer == "!quit":
            break
        if answer == "!skip":
            session.skip(task)
            continue
        if answer == "!discard":
            session.discard(task)
            continue
        elapsed = time.monotonic() - started
        outcome = session.submit(task, answer, elapsed)
        if outcome.correct:
            click.echo("  correct")
        else:
            click.echo(f"  wrong, expected: {outcome.expected}")
        if outcome.level_complete:
            verdict = "passed" if outcome.level_passed else "failed"
            click.echo(f"  level {verdict} (+{outcome.score_delta:.1f})")
        answered += 1
    click.echo(f"final score {session.score:.1f} at level {session.level}", err=True)


if __name__ == "__main__":
    main()
