#include "ecoforecast/road_network.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ecoforecast/io.hpp"
#include "ecoforecast/rng.hpp"

namespace ecoforecast {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("network: " + msg);
}

// Reachability over node ids following the supplied adjacency.
std::set<int> reachable(int start,
                        const std::map<int, std::vector<int>>& adj) {
    std::set<int> seen{start};
    std::deque<int> frontier{start};
    while (!frontier.empty()) {
        const int node = frontier.front();
        frontier.pop_front();
        const auto it = adj.find(node);
        if (it == adj.end()) continue;
        for (int next : it->second) {
            if (seen.insert(next).second) frontier.push_back(next);
        }
    }
    return seen;
}

}  // namespace

Network::Network(std::vector<int> nodes, std::vector<Link> links)
    : nodes_(std::move(nodes)), links_(std::move(links)) {
    std::sort(nodes_.begin(), nodes_.end());
    if (std::adjacent_find(nodes_.begin(), nodes_.end()) != nodes_.end())
        fail("duplicate node id");
    std::sort(links_.begin(), links_.end(),
              [](const Link& a, const Link& b) { return a.id < b.id; });

    std::set<int> node_set(nodes_.begin(), nodes_.end());
    for (std::size_t i = 0; i < links_.size(); ++i) {
        const Link& l = links_[i];
        if (!link_index_.emplace(l.id, i).second)
            fail("duplicate link id " + std::to_string(l.id));
        if (!node_set.count(l.from_node))
            fail("link " + std::to_string(l.id) + " references unknown node " +
                 std::to_string(l.from_node));
        if (!node_set.count(l.to_node))
            fail("link " + std::to_string(l.id) + " references unknown node " +
                 std::to_string(l.to_node));
        if (l.from_node == l.to_node)
            fail("link " + std::to_string(l.id) + " is a self loop");
        if (!(l.length_m > 0.0))
            fail("link " + std::to_string(l.id) + " has non-positive length");
        if (l.lanes < 1)
            fail("link " + std::to_string(l.id) + " has no lanes");
        if (!(l.ffs_kmh > 0.0))
            fail("link " + std::to_string(l.id) +
                 " has non-positive free-flow speed");
    }

    for (int node : nodes_) {
        out_by_node_[node];
        in_by_node_[node];
    }
    for (const Link& l : links_) {
        out_by_node_[l.from_node].push_back(l.id);
        in_by_node_[l.to_node].push_back(l.id);
    }

    for (const Link& l : links_) {
        std::vector<int> ups;
        for (int candidate_id : in_by_node_[l.from_node]) {
            const Link& u = link(candidate_id);
            const bool reverse_of_same_segment =
                u.from_node == l.to_node && u.to_node == l.from_node;
            if (!reverse_of_same_segment) ups.push_back(u.id);
        }
        in_links_.emplace(l.id, std::move(ups));
    }

    if (nodes_.size() >= 2) {
        std::map<int, std::vector<int>> fwd;
        std::map<int, std::vector<int>> rev;
        for (const Link& l : links_) {
            fwd[l.from_node].push_back(l.to_node);
            rev[l.to_node].push_back(l.from_node);
        }
        const int start = nodes_.front();
        if (reachable(start, fwd).size() != nodes_.size() ||
            reachable(start, rev).size() != nodes_.size())
            fail("graph is not strongly connected");
    }
}

bool Network::has_node(int id) const {
    return std::binary_search(nodes_.begin(), nodes_.end(), id);
}

bool Network::has_link(int id) const { return link_index_.count(id) != 0; }

const Link& Network::link(int id) const {
    const auto it = link_index_.find(id);
    if (it == link_index_.end())
        fail("unknown link id " + std::to_string(id));
    return links_[it->second];
}

const std::vector<int>& Network::in_links(int link_id) const {
    const auto it = in_links_.find(link_id);
    if (it == in_links_.end())
        fail("unknown link id " + std::to_string(link_id));
    return it->second;
}

const std::vector<int>& Network::out_links(int node_id) const {
    const auto it = out_by_node_.find(node_id);
    if (it == out_by_node_.end())
        fail("unknown node id " + std::to_string(node_id));
    return it->second;
}

const std::vector<int>& Network::arriving_links(int node_id) const {
    const auto it = in_by_node_.find(node_id);
    if (it == in_by_node_.end())
        fail("unknown node id " + std::to_string(node_id));
    return it->second;
}

Network load_network(const std::string& text) {
    std::vector<int> nodes;
    std::vector<Link> links;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = io::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const std::vector<std::string> f = io::split(line, ',');
        const std::string where = " (line " + std::to_string(line_no) + ")";
        if (f[0] == "node") {
            if (f.size() != 2) fail("malformed node record" + where);
            nodes.push_back(io::parse_int(f[1]));
        } else if (f[0] == "link") {
            if (f.size() != 7) fail("malformed link record" + where);
            Link l;
            l.id = io::parse_int(f[1]);
            l.from_node = io::parse_int(f[2]);
            l.to_node = io::parse_int(f[3]);
            l.length_m = io::parse_double(f[4]);
            l.lanes = io::parse_int(f[5]);
            l.ffs_kmh = io::parse_double(f[6]);
            links.push_back(l);
        } else {
            fail("unknown record type '" + f[0] + "'" + where);
        }
    }
    if (nodes.empty() || links.empty())
        fail("network defines no usable graph");
    return Network(std::move(nodes), std::move(links));
}

std::string export_network(const Network& net) {
    std::string out;
    for (int node : net.nodes()) {
        out += "node," + std::to_string(node) + "\n";
    }
    for (const Link& l : net.links()) {
        out += "link," + std::to_string(l.id) + "," +
               std::to_string(l.from_node) + "," + std::to_string(l.to_node) +
               "," + io::fmt_double(l.length_m) + "," +
               std::to_string(l.lanes) + "," + io::fmt_double(l.ffs_kmh) +
               "\n";
    }
    return out;
}

Network generate_grid(int rows, int cols, double spacing_m,
                      const std::vector<int>& lane_choices,
                      const std::vector<double>& ffs_choices,
                      std::uint64_t seed) {
    if (rows < 2 || cols < 2)
        throw std::runtime_error("network: grid needs rows >= 2 and cols >= 2");
    if (lane_choices.empty() || ffs_choices.empty())
        throw std::runtime_error("network: empty grid choice list");
    if (!(spacing_m > 0.0))
        throw std::runtime_error("network: non-positive grid spacing");

    std::vector<int> nodes;
    nodes.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) nodes.push_back(r * cols + c);

    rng::Engine eng(rng::derive_seed(seed, "generate_grid", 0));
    std::vector<Link> links;
    int next_id = 0;
    const auto add_pair = [&](int a, int b) {
        for (const auto [from, to] : {std::pair{a, b}, std::pair{b, a}}) {
            Link l;
            l.id = next_id++;
            l.from_node = from;
            l.to_node = to;
            l.length_m = spacing_m;
            l.lanes = lane_choices[eng.below(lane_choices.size())];
            l.ffs_kmh = ffs_choices[eng.below(ffs_choices.size())];
            links.push_back(l);
        }
    };
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int node = r * cols + c;
            if (c + 1 < cols) add_pair(node, node + 1);
            if (r + 1 < rows) add_pair(node, node + cols);
        }
    }
    return Network(std::move(nodes), std::move(links));
}

}  // namespace ecoforecast
