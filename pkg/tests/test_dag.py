import pytest

from binstretch.checker import check
from binstretch.core import GameParams
from binstretch.dag import (
    DotParseError, build_dag, compress_last_layer, dag_stats, decompress, emit_dot, parse_dot,
    read_dot, tree_to_dag, write_dot,
)
from binstretch.search import SearchContext, sequential

HEADER = "digraph binstretch {\nbs_m=3;\nbs_t=4;\nbs_g=3;\n"


@pytest.fixture(scope="module")
def tree_19_14():
    p = GameParams(3, 19, 14)
    res = sequential(p, SearchContext(p, None, hash_bits=20))
    return p, res.tree


def test_fig1_roundtrip(fig1_text):
    d = parse_dot(fig1_text)
    text = emit_dot(d)
    again = parse_dot(text)
    assert again.same_as(d)
    assert emit_dot(again) == text


def test_fig1_derived_items(fig1_text):
    d = parse_dot(fig1_text)
    by_name = {n.name: n for n in d.nodes}
    assert by_name["e"].items.items() == [3, 1, 1]
    assert by_name["f"].items.items() == [2, 2, 1, 1]


def test_fig1_stats(fig1_text):
    s = dag_stats(parse_dot(fig1_text))
    assert (s.nodes, s.edges, s.compressed) == (7, 6, 0)
    assert s.depth == 5


def test_recorded_tree_is_shared(tree_19_14):
    p, tree = tree_19_14
    dag = tree_to_dag(tree, p)
    assert len(dag.nodes) == tree.distinct_nodes()
    assert len(dag.nodes) <= tree.tree_size()
    keys = [n.key() for n in dag.nodes]
    assert len(keys) == len(set(keys))


def test_compression_shrinks_and_decompresses(tree_19_14):
    p, tree = tree_19_14
    full = build_dag(tree, p, compress=False)
    small = build_dag(tree, p)
    assert len(small.nodes) < len(full.nodes)
    assert dag_stats(small).compressed > 0
    assert check(small) and check(full)
    back = decompress(small)
    assert check(back)
    assert compress_last_layer(full).edge_count() == small.edge_count()


def test_file_roundtrip(tmp_path, tree_19_14):
    p, tree = tree_19_14
    dag = build_dag(tree, p)
    path = tmp_path / "s.dot"
    write_dot(dag, path)
    again = read_dot(path)
    assert again.same_as(dag)
    assert check(again)


@pytest.mark.parametrize("body,line,words", [
    ("graph x {\n", 1, "digraph"),
    (HEADER + 'r [loads="0,0,0",next="1"];\nr [loads="0,0,0",next="1"];\n}\n', 6, "twice"),
    (HEADER + 'r [loads="0,0",next="1"];\n}\n', 5, "loads"),
    (HEADER + 'r [loads="0,0,0"];\n}\n', 5, "next"),
    (HEADER + 'r [loads="0,0,0",next="1"];\nr -> q;\n}\n', 6, "undefined"),
    (HEADER + 'r [loads="0,0,0",next="1"];\nwhat is this\n}\n', 6, "unrecognised"),
    (HEADER + 'r [loads="0,0,0",next="1",colour="red"];\n}\n', 5, "attribute"),
    (HEADER + 'r [loads="0,0,0",next="1"];\ns [loads="1,0,0",next="1"];\n}\n', 6, "second root"),
    (HEADER + 'r [loads="0,0,0",next="1",packing="1;1"];\n}\n', 5, "packing"),
    (HEADER + 'r [loads="0,0,0",next="1"];\n', 6, "closing brace"),
])
def test_parse_errors_carry_line_numbers(body, line, words):
    with pytest.raises(DotParseError) as err:
        parse_dot(body)
    assert err.value.line == line
    assert words in str(err.value)


def test_parse_rejects_cycles():
    text = HEADER + ('r [loads="0,0,0",next="1"];\na [loads="1,0,0",next="1"];\n'
                     'b [loads="2,0,0",next="1"];\nr -> a;\na -> b;\nb -> a;\n}\n')
    with pytest.raises(DotParseError, match="cycle"):
        parse_dot(text)


def test_parse_rejects_conflicting_items():
    text = HEADER + ('r [loads="0,0,0",next="1"];\na [loads="1,0,0",next="2"];\n'
                     'x [loads="2,0,0",next="1"];\nr -> a;\nr -> x;\na -> x;\n}\n')
    with pytest.raises(DotParseError) as err:
        parse_dot(text)
    assert err.value.line > 0


def test_unknown_params_line():
    with pytest.raises(DotParseError, match="bs_g"):
        parse_dot('digraph binstretch {\nbs_m=3;\nbs_t=4;\nr [loads="0,0,0",next="1"];\n}\n')
