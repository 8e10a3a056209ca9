#pragma once

// Directed road network with upstream (in-link) topology, plus loaders and
// a deterministic synthetic grid generator.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ecoforecast {

struct Link {
    int id = 0;
    int from_node = 0;
    int to_node = 0;
    double length_m = 0.0;
    int lanes = 1;
    double ffs_kmh = 0.0;

    double ffs_mps() const { return ffs_kmh / 3.6; }

    bool operator==(const Link&) const = default;
};

/// Immutable after construction; safe for concurrent reads.
class Network {
public:
    Network(std::vector<int> nodes, std::vector<Link> links);

    const std::vector<int>& nodes() const { return nodes_; }
    const std::vector<Link>& links() const { return links_; }

    bool has_node(int id) const;
    bool has_link(int id) const;
    const Link& link(int id) const;

    /// Upstream links: U with U.to_node == L.from_node, excluding the
    /// reverse direction of the same physical segment. Sorted by id.
    const std::vector<int>& in_links(int link_id) const;

    /// Links departing a node, sorted by link id.
    const std::vector<int>& out_links(int node_id) const;

    /// Links arriving at a node, sorted by link id.
    const std::vector<int>& arriving_links(int node_id) const;

    bool operator==(const Network& other) const {
        return nodes_ == other.nodes_ && links_ == other.links_;
    }

private:
    std::vector<int> nodes_;
    std::vector<Link> links_;
    std::map<int, std::size_t> link_index_;
    std::map<int, std::vector<int>> in_links_;
    std::map<int, std::vector<int>> out_by_node_;
    std::map<int, std::vector<int>> in_by_node_;
};

/// Parses the structured-text network format:
///   node,<id>
///   link,<id>,<from>,<to>,<length_m>,<lanes>,<ffs_kmh>
/// Lines starting with '#' and blank lines are ignored.
/// Throws std::runtime_error on duplicate ids, dangling node references,
/// non-positive length/lanes/ffs, or a graph that is not strongly connected.
Network load_network(const std::string& text);

/// Inverse of load_network: emits nodes (ascending id) then links
/// (ascending id) in the structured-text format.
std::string export_network(const Network& net);

/// Bidirectional Manhattan grid with rows*cols nodes. Lane counts and
/// free-flow speeds are drawn per directed link from the choice lists using
/// a deterministic generator seeded from `seed`. Pure function of its
/// arguments.
Network generate_grid(int rows, int cols, double spacing_m,
                      const std::vector<int>& lane_choices,
                      const std::vector<double>& ffs_choices,
                      std::uint64_t seed);

}  // namespace ecoforecast
