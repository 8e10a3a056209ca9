#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "ecoforecast/road_network.hpp"

using namespace ecoforecast;

TEST_CASE("grid generation produces the expected node and link counts") {
    const Network net = generate_grid(6, 6, 500.0, {1, 2}, {40.0, 50.0, 60.0}, 42);
    CHECK(net.nodes().size() == 36);
    // 2 * (rows*(cols-1) + (rows-1)*cols) directed links.
    CHECK(net.links().size() == 120);
    for (const Link& l : net.links()) {
        CHECK(l.length_m == 500.0);
        CHECK((l.lanes == 1 || l.lanes == 2));
        CHECK((l.ffs_kmh == 40.0 || l.ffs_kmh == 50.0 || l.ffs_kmh == 60.0));
        CHECK(net.has_node(l.from_node));
        CHECK(net.has_node(l.to_node));
        CHECK(l.from_node != l.to_node);
    }
}

TEST_CASE("grid link ids are unique and lookup works") {
    const Network net = generate_grid(3, 4, 250.0, {1}, {50.0}, 7);
    std::set<int> ids;
    for (const Link& l : net.links()) {
        ids.insert(l.id);
        CHECK(net.link(l.id) == l);
    }
    CHECK(ids.size() == net.links().size());
}

TEST_CASE("grid generation is seed deterministic") {
    const Network a = generate_grid(4, 4, 300.0, {1, 2}, {40.0, 60.0}, 9);
    const Network b = generate_grid(4, 4, 300.0, {1, 2}, {40.0, 60.0}, 9);
    const Network c = generate_grid(4, 4, 300.0, {1, 2}, {40.0, 60.0}, 10);
    CHECK(a == b);
    CHECK(!(a == c));
}

TEST_CASE("in_links lists upstream links but never the reverse direction") {
    const Network net = generate_grid(3, 3, 400.0, {1}, {50.0}, 1);
    for (const Link& l : net.links()) {
        for (int up_id : net.in_links(l.id)) {
            const Link& up = net.link(up_id);
            CHECK(up.to_node == l.from_node);
            // The opposite direction of the same segment is excluded.
            CHECK(!(up.from_node == l.to_node && up.to_node == l.from_node));
        }
    }
}

TEST_CASE("every grid interior node has incoming and outgoing links") {
    const Network net = generate_grid(3, 3, 400.0, {1}, {50.0}, 1);
    for (int node : net.nodes()) {
        CHECK(!net.out_links(node).empty());
        CHECK(!net.arriving_links(node).empty());
    }
}

TEST_CASE("network text export round-trips") {
    const Network net = generate_grid(4, 3, 350.0, {1, 2}, {40.0, 50.0}, 21);
    const std::string text = export_network(net);
    const Network back = load_network(text);
    CHECK(net == back);
    // Exporting again yields identical text.
    CHECK(export_network(back) == text);
}

TEST_CASE("load_network rejects malformed input") {
    CHECK_THROWS(load_network(""));
    CHECK_THROWS(load_network("nonsense\n"));
    // A link that references a missing node must be rejected.
    CHECK_THROWS(load_network("node,0\nnode,1\nlink,5,0,99,100,1,50\n"));
    // Strong connectivity is required: a one-way pair is not enough.
    CHECK_THROWS(load_network("node,0\nnode,1\nlink,1,0,1,100,1,50\n"));
}

TEST_CASE("load_network accepts comments and a minimal two-way pair") {
    const Network net = load_network(
        "# tiny\nnode,0\nnode,1\n"
        "link,1,0,1,100,1,50\nlink,2,1,0,100,1,50\n");
    CHECK(net.nodes().size() == 2);
    CHECK(net.links().size() == 2);
    CHECK(net.link(1).ffs_mps() == doctest::Approx(50.0 / 3.6));
}
