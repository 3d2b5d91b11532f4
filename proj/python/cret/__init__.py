"""Continual embedding retrieval: adapters, routing and prototype dictionaries."""

import json

from ._core import *  # noqa: F401,F403
from ._core import _benchmark, _config_digest, _generate, _run


def run(config):
    """Run every configured stage; returns the metrics report as a dict."""
    return json.loads(_run(json.dumps(config)))


def benchmark(config, modes, seeds, threads=0):
    return json.loads(_benchmark(json.dumps(config), list(modes), list(seeds), threads))


def generate(synth):
    """Synthetic dataset as (manifest records, embedding records)."""
    manifest, embeddings = _generate(json.dumps(synth))
    return ([json.loads(l) for l in manifest.splitlines()],
            [json.loads(l) for l in embeddings.splitlines()])


def config_digest(config):
    return _config_digest(json.dumps(config))
