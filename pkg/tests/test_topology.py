import pytest
from hypothesis import example, given, strategies as st

from hycoll import (ConfigurationError, Placement, RankLayout, build_transtables, comm_split,
                    gather_shmem_sizes, launch, split_shmem_bridge)


def _packages(layout, parent_of=lambda ctx: ctx.world):
    def body(ctx):
        parent = parent_of(ctx)
        if parent is None:
            return None
        pkg = split_shmem_bridge(parent, ctx.layout)
        tables = build_transtables(parent, pkg)
        return dict(
            shmem=pkg.shmem_comm.members,
            me=pkg.shmem_comm.my_index,
            bridge=pkg.bridge_comm.members if pkg.bridge_comm else None,
            bridge_size=pkg.bridgecomm_size,
            leader=pkg.is_leader,
            tables=(tables.shmem_transtable, tables.bridge_transtable),
            sizes=gather_shmem_sizes(pkg),
            parent=parent.members,
        )
    return launch(layout, body).results


def test_block_placement():
    layout = RankLayout((3, 2))
    assert layout.world_size == 5
    assert [layout.node_of(r) for r in range(5)] == [0, 0, 0, 1, 1]
    assert layout.ranks_on(1) == [3, 4]


def test_round_robin_deals_cyclically():
    layout = RankLayout((2, 2), Placement.ROUND_ROBIN)
    assert layout.ranks_on(0) == [0, 2]
    assert layout.ranks_on(1) == [1, 3]
    # full nodes are skipped once exhausted
    layout = RankLayout((1, 3), "rr")
    assert layout.ranks_on(0) == [0]
    assert layout.ranks_on(1) == [1, 2, 3]


@pytest.mark.parametrize("sizes", [(), (0, 2), (2, -1)])
def test_bad_node_sizes(sizes):
    with pytest.raises(ConfigurationError):
        RankLayout(sizes)


def test_world_size_mismatch():
    with pytest.raises(ConfigurationError):
        RankLayout((2, 2), world_size=5)


def test_split_block_2x2():
    res = _packages(RankLayout((2, 2)))
    assert res[3]["shmem"] == (2, 3) and res[3]["me"] == 1 and res[3]["bridge"] is None
    leaders = [r for r in range(4) if res[r]["leader"]]
    assert leaders == [0, 2]
    assert res[0]["bridge"] == (0, 2)
    assert {r["bridge_size"] for r in res} == {2}


def test_split_round_robin_2x2():
    res = _packages(RankLayout((2, 2), Placement.ROUND_ROBIN))
    assert res[0]["shmem"] == (0, 2) and res[1]["shmem"] == (1, 3)
    assert [r for r in range(4) if res[r]["leader"]] == [0, 1]


def test_split_of_row_subcommunicator():
    # row {0,1,4,5} of a 2-node x 4-rank block layout
    layout = RankLayout((4, 4))
    res = _packages(layout, lambda ctx: comm_split(ctx.world, 0 if ctx.rank % 4 < 2 else 1, ctx.rank))
    assert res[0]["parent"] == (0, 1, 4, 5)
    assert res[1]["shmem"] == (0, 1) and res[5]["shmem"] == (4, 5)
    assert res[0]["bridge"] == (0, 4)
    assert [r for r in (0, 1, 4, 5) if res[r]["leader"]] == [0, 4]


def test_subcommunicator_drops_empty_nodes():
    layout = RankLayout((2, 2, 2))
    res = _packages(layout, lambda ctx: comm_split(ctx.world, ctx.rank in (0, 1, 4), ctx.rank))
    assert res[0]["parent"] == (0, 1, 4)
    assert res[0]["bridge"] == (0, 4)
    assert res[0]["tables"] == ((0, 1, 0), (0, 0, 1))


@pytest.mark.parametrize("sizes, shmem, bridge", [
    ((2, 2), (0, 1, 0, 1), (0, 0, 1, 1)),
    ((3, 2), (0, 1, 2, 0, 1), (0, 0, 0, 1, 1)),
    ((4,), (0, 1, 2, 3), (0, 0, 0, 0)),
])
def test_transtables(sizes, shmem, bridge):
    res = _packages(RankLayout(sizes))
    assert all(r["tables"] == (shmem, bridge) for r in res)


@pytest.mark.parametrize("sizes", [(2, 2), (3, 2), (4,)])
def test_gather_shmem_sizes(sizes):
    res = _packages(RankLayout(sizes))
    for r in res:
        assert r["sizes"] == (list(sizes) if r["leader"] else [])


def test_comm_split_orders_by_key():
    def body(ctx):
        sub = comm_split(ctx.world, ctx.rank % 2, -ctx.rank)
        return sub.members, sub.rank

    res = launch(RankLayout((4,)), body).results
    assert res[0] == ((2, 0), 1)
    assert res[3] == ((3, 1), 0)


def test_comm_split_none_color():
    def body(ctx):
        return comm_split(ctx.world, None if ctx.rank == 1 else 0, ctx.rank)

    res = launch(RankLayout((3,)), body).results
    assert res[1] is None
    assert res[0].members == (0, 2)


layouts = st.builds(
    RankLayout,
    st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple),
    st.sampled_from([Placement.BLOCK, Placement.ROUND_ROBIN]),
)


@given(layouts, st.integers(0, 2**16))
@example(RankLayout((1, 3, 1), Placement.ROUND_ROBIN), 20)
def test_partition_and_round_trip(layout, mask_seed):
    # random sub-communicator: every rank with the bit set, plus rank 0
    def pick(ctx):
        keep = ctx.rank == 0 or (mask_seed >> (ctx.rank % 16)) & 1
        return comm_split(ctx.world, 1 if keep else None, ctx.rank)

    res = _packages(layout, pick)
    members = next(r for r in res if r is not None)["parent"]
    got = [res[r] for r in members]
    # identical view on every member
    assert all(g["tables"] == got[0]["tables"] and g["bridge_size"] == got[0]["bridge_size"]
               for g in got)
    groups = {g["shmem"] for g in got}
    assert sorted(r for grp in groups for r in grp) == sorted(members)
    for grp in groups:
        assert len({layout.node_of(r) for r in grp}) == 1
        assert res[grp[0]]["leader"] and min(grp) == grp[0]
        assert sum(res[r]["leader"] for r in grp) == 1
    # bridge orders leaders by node index, not by rank
    leaders = sorted((grp[0] for grp in groups), key=layout.node_of)
    assert got[0]["bridge_size"] == len(groups)
    assert tuple(leaders) == res[leaders[0]]["bridge"]
    shmem_t, bridge_t = got[0]["tables"]
    by_node = {res[g[0]]["bridge"].index(g[0]): g for g in groups}
    for idx, r in enumerate(members):
        assert by_node[bridge_t[idx]][shmem_t[idx]] == r


@given(layouts)
def test_split_is_deterministic(layout):
    assert _packages(layout) == _packages(layout)
