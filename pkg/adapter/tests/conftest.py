"""Shared fixtures: a fake checkpoint, a frame directory, one export."""

import types

import pytest

from nvladapter import SimulatedScaleSpaceRuntime, export_sequence

CHECKPOINT_BYTES = b"simulated scale-space-flow checkpoint v1\n" + bytes(range(256))
FRAME_COUNT = 16


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "ssf_sim.bin"
    path.write_bytes(CHECKPOINT_BYTES)
    return path


@pytest.fixture(scope="session")
def frames_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("frames")
    for index in range(FRAME_COUNT):
        payload = f"fake frame payload {index}\n".encode() * 64
        (root / f"frame_{index:04d}.png").write_bytes(payload)
    return root


@pytest.fixture(scope="session")
def frame_paths(frames_dir):
    return sorted(frames_dir.iterdir())


@pytest.fixture(scope="session")
def exported(checkpoint, frame_paths):
    """One simulated export reused across tests: runtime, manifest, bytes."""
    runtime = SimulatedScaleSpaceRuntime(checkpoint)
    manifest = runtime.default_manifest(frame_paths)
    blob = export_sequence(runtime, frame_paths, manifest)
    return types.SimpleNamespace(runtime=runtime, manifest=manifest, blob=blob)
