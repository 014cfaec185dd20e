import numpy as np
import pytest
from hypothesis import given, strategies as st

from hycoll import (BoundsError, RankLayout, ResourceError, UsageError, allocate_shared,
                    child_wait, free_window, launch, leader_signal, local_view, memory_fence,
                    node_barrier, split_shmem_bridge)
from hycoll.shm import CACHE_LINE


def _on_nodes(sizes, body, **kw):
    def wrapped(ctx):
        return body(ctx, split_shmem_bridge(ctx.world, ctx.layout))
    return launch(RankLayout(sizes), wrapped, **kw)


def test_payload_size_and_zero_init():
    def body(ctx, pkg):
        win = allocate_shared(4, 8, 4, pkg)
        out = (win.payload_bytes, win.element_size, int(win.base.sum()), win.node_id)
        free_window(win)
        return out

    res = _on_nodes((4,), body)
    assert res.results == [(128, 8, 0, 0)] * 4


def test_minimal_arena():
    def body(ctx, pkg):
        win = allocate_shared(1, 1, 1, pkg)
        return win.payload_bytes

    assert _on_nodes((1,), body).results == [1]


def test_control_block_is_cache_line_padded():
    def body(ctx, pkg):
        win = allocate_shared(1, 1, 1, pkg)
        return win.control.nbytes

    assert _on_nodes((3,), body).results[0] % CACHE_LINE == 0


def test_two_windows_two_arenas():
    def body(ctx, pkg):
        a = allocate_shared(2, 8, 1, pkg)
        b = allocate_shared(2, 8, 1, pkg)
        if pkg.is_leader:
            a.base[:] = 1
        memory_fence(a)
        free_window(b)
        free_window(a)
        return int(b.base.sum())

    res = _on_nodes((2, 2), body)
    assert res.results == [0] * 4
    assert len(res.audit.allocations) == 4
    assert all(c == 1 for c in res.audit.allocations.values())
    assert res.audit.single_copy()
    assert res.audit.live == {0: 0, 1: 0}
    # every on-node rank attached to its node's single copy
    assert sorted(res.audit.attached.values()) == [2, 2, 2, 2]


def test_children_share_leader_memory():
    def body(ctx, pkg):
        win = allocate_shared(8, 1, pkg.shmemcomm_size, pkg)
        local_view(win, pkg.shmem_rank, 8).array()[:] = ctx.rank
        node_barrier(win, pkg)
        out = win.base.copy()
        free_window(win)
        return out

    res = _on_nodes((3, 2), body).results
    expect0 = np.repeat(np.arange(3, dtype=np.uint8), 8)
    expect1 = np.repeat(np.arange(3, 5, dtype=np.uint8), 8)
    for r in range(3):
        assert np.array_equal(res[r], expect0)
    for r in range(3, 5):
        assert np.array_equal(res[r], expect1)


@pytest.mark.parametrize("idx, dsize, offset", [(3, 32, 96), (0, 7, 0), (0, 128, 0)])
def test_local_view_offsets(idx, dsize, offset):
    def body(ctx, pkg):
        win = allocate_shared(4, 8, 4, pkg)
        v = local_view(win, idx, dsize)
        return v.offset_bytes, v.length_bytes

    assert _on_nodes((1,), body).results[0] == (offset, dsize)


def test_local_view_bounds():
    def body(ctx, pkg):
        win = allocate_shared(4, 8, 4, pkg)
        with pytest.raises(BoundsError):
            local_view(win, 4, 32)
        with pytest.raises(IndexError):
            local_view(win, 0, 129)
        return True

    assert _on_nodes((1,), body).results == [True]


@given(st.integers(1, 8), st.integers(1, 16), st.integers(0, 4))
def test_views_tile_a_prefix(k, dsize, spare):
    def body(ctx, pkg):
        win = allocate_shared(dsize, 1, k + spare, pkg)
        return [(v.offset_bytes, v.length_bytes) for v in
                (local_view(win, i, dsize) for i in range(k))]

    spans = _on_nodes((1,), body).results[0]
    covered = np.zeros((k + spare) * dsize, dtype=int)
    for off, length in spans:
        covered[off:off + length] += 1
    assert (covered[:k * dsize] == 1).all() and (covered[k * dsize:] == 0).all()


def test_bad_sizes_raise_resource_error_on_every_rank():
    def body(ctx, pkg):
        try:
            allocate_shared(0, 8, 1, pkg)
        except ResourceError:
            return "resource"

    res = _on_nodes((3,), body)
    assert res.results == ["resource"] * 3


def test_double_free_is_usage_error():
    def body(ctx, pkg):
        win = allocate_shared(1, 8, 1, pkg)
        free_window(win)
        with pytest.raises(UsageError):
            free_window(win)
        with pytest.raises(UsageError):
            local_view(win, 0, 8)
        return True

    assert _on_nodes((2,), body).results == [True, True]


def test_fence_signal_wait_makes_writes_visible():
    def body(ctx, pkg):
        win = allocate_shared(8, 8, 1, pkg)
        seen = []
        for epoch in range(1, 200):
            if pkg.is_leader:
                win.base[:8].view(np.int64)[0] = epoch
                leader_signal(win.cell, win)
            else:
                child_wait(win.cell, win)
                seen.append(int(win.base[:8].view(np.int64)[0]))
            # reads of epoch e finish before the leader writes e+1
            node_barrier(win, pkg)
        return seen

    res = _on_nodes((4,), body).results
    for seen in res[1:]:
        assert seen == list(range(1, 200))
