#include "sihd/encoding_tree.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"

namespace sihd {

namespace {

// Contribution of one non-root node: -(g / vol_root) log2(vol / vol_parent).
double entropy_term(double cut, double vol, double parent_vol, double root_vol) {
    if (cut <= 0.0 || vol <= 0.0 || parent_vol <= 0.0 || root_vol <= 0.0) return 0.0;
    return -(cut / root_vol) * std::log2(vol / parent_vol);
}

}  // namespace

class TreeAccess {
public:
    // Canonicalizes (BFS, siblings by smallest vertex) and fills heights and
    // vertex sets. remap[old] = new id.
    static EncodingTree build(std::size_t n_vertices, const std::vector<NodeId>& parent,
                              const std::vector<std::size_t>& leaf_vertex, std::vector<NodeId>* remap = nullptr) {
        const std::size_t n = parent.size();
        if (n == 0 || leaf_vertex.size() != n) throw ValidationError("encoding tree: malformed node arrays");
        NodeId root = kNoNode;
        std::vector<std::vector<NodeId>> children(n);
        for (NodeId i = 0; i < n; ++i) {
            if (parent[i] == kNoNode) {
                if (root != kNoNode) throw ValidationError("encoding tree: multiple roots");
                root = i;
            } else {
                if (parent[i] >= n) throw ValidationError("encoding tree: parent out of range");
                children[parent[i]].push_back(i);
            }
        }
        if (root == kNoNode) throw ValidationError("encoding tree: no root");

        // Pre-order from the root; detects cycles / unreachable nodes.
        std::vector<NodeId> order;
        order.reserve(n);
        std::vector<char> seen(n, 0);
        std::vector<NodeId> stack{root};
        while (!stack.empty()) {
            const NodeId x = stack.back();
            stack.pop_back();
            if (seen[x]) throw ValidationError("encoding tree: cycle");
            seen[x] = 1;
            order.push_back(x);
            for (NodeId c : children[x]) stack.push_back(c);
        }
        if (order.size() != n) throw ValidationError("encoding tree: unreachable nodes");

        std::vector<std::size_t> min_vertex(n, kNoNode);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const NodeId x = *it;
            if (children[x].empty()) {
                if (leaf_vertex[x] == kNoNode || leaf_vertex[x] >= n_vertices) {
                    throw ValidationError("encoding tree: leaf without a valid vertex");
                }
                min_vertex[x] = leaf_vertex[x];
            } else {
                if (leaf_vertex[x] != kNoNode) throw ValidationError("encoding tree: internal node carries a vertex");
                for (NodeId c : children[x]) min_vertex[x] = std::min(min_vertex[x], min_vertex[c]);
            }
        }
        for (auto& ch : children) {
            std::sort(ch.begin(), ch.end(), [&](NodeId a, NodeId b) { return min_vertex[a] < min_vertex[b]; });
        }

        std::vector<NodeId> bfs{root};
        std::vector<std::size_t> depth(n, 0);
        for (std::size_t i = 0; i < bfs.size(); ++i) {
            for (NodeId c : children[bfs[i]]) {
                depth[c] = depth[bfs[i]] + 1;
                bfs.push_back(c);
            }
        }
        std::vector<NodeId> new_id(n);
        for (std::size_t i = 0; i < bfs.size(); ++i) new_id[bfs[i]] = i;
        const std::size_t tree_height = *std::max_element(depth.begin(), depth.end());

        EncodingTree t;
        t.nodes_.resize(n);
        t.leaf_of_.assign(n_vertices, kNoNode);
        for (std::size_t i = 0; i < n; ++i) {
            const NodeId old = bfs[i];
            auto& node = t.nodes_[i];
            node.parent = parent[old] == kNoNode ? kNoNode : new_id[parent[old]];
            for (NodeId c : children[old]) node.children.push_back(new_id[c]);
            node.height = tree_height - depth[old];
            if (node.children.empty()) {
                if (t.leaf_of_[leaf_vertex[old]] != kNoNode) {
                    throw ValidationError("encoding tree: vertex appears in two leaves");
                }
                t.leaf_of_[leaf_vertex[old]] = i;
                node.vertices = {leaf_vertex[old]};
            }
        }
        for (std::size_t v = 0; v < n_vertices; ++v) {
            if (t.leaf_of_[v] == kNoNode) throw ValidationError("encoding tree: vertex " + std::to_string(v) + " has no leaf");
        }
        for (std::size_t i = n; i-- > 0;) {
            auto& node = t.nodes_[i];
            if (node.children.empty()) continue;
            for (NodeId c : node.children) {
                const auto& cv = t.nodes_[c].vertices;
                node.vertices.insert(node.vertices.end(), cv.begin(), cv.end());
            }
            std::sort(node.vertices.begin(), node.vertices.end());
        }
        if (remap) *remap = std::move(new_id);
        return t;
    }

    static void set_stats(EncodingTree& t, const NodeStats& s) {
        for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
            t.nodes_[i].volume = s.volume[i];
            t.nodes_[i].cut = s.cut[i];
        }
    }
};

namespace {

void require_same_vertices(const StateGraph& graph, const EncodingTree& tree) {
    if (graph.size() != tree.vertex_count()) {
        throw ValidationError("vertex-set mismatch: graph has " + std::to_string(graph.size()) +
                              " vertices, tree covers " + std::to_string(tree.vertex_count()));
    }
}

// Arena used while restructuring; ids stay stable until converted back.
struct MutableTree {
    struct Node {
        NodeId parent = kNoNode;
        std::vector<NodeId> children;
        std::size_t vertex = kNoNode;
        bool alive = true;
        double volume = 0.0;
        double cut = 0.0;
    };
    std::vector<Node> nodes;
    std::size_t n_vertices = 0;

    static MutableTree from(const EncodingTree& tree, const NodeStats& stats) {
        MutableTree m;
        m.n_vertices = tree.vertex_count();
        m.nodes.resize(tree.size());
        for (NodeId i = 0; i < tree.size(); ++i) {
            const auto& src = tree.node(i);
            auto& dst = m.nodes[i];
            dst.parent = src.parent;
            dst.children = src.children;
            if (src.is_leaf()) dst.vertex = src.vertices.front();
            dst.volume = stats.volume[i];
            dst.cut = stats.cut[i];
        }
        return m;
    }

    NodeId add(NodeId parent, double volume, double cut) {
        Node n;
        n.parent = parent;
        n.volume = volume;
        n.cut = cut;
        nodes.push_back(std::move(n));
        return nodes.size() - 1;
    }

    void collect_vertices(NodeId x, std::vector<std::size_t>& out) const {
        if (nodes[x].vertex != kNoNode) {
            out.push_back(nodes[x].vertex);
            return;
        }
        for (NodeId c : nodes[x].children) collect_vertices(c, out);
    }

    void replace_child(NodeId parent, NodeId old_child, const std::vector<NodeId>& with) {
        auto& ch = nodes[parent].children;
        auto it = std::find(ch.begin(), ch.end(), old_child);
        it = ch.erase(it);
        ch.insert(it, with.begin(), with.end());
        for (NodeId w : with) nodes[w].parent = parent;
    }

    EncodingTree finish(const StateGraph& graph) const {
        std::vector<NodeId> compact(nodes.size(), kNoNode);
        std::vector<NodeId> parent;
        std::vector<std::size_t> leaf_vertex;
        for (NodeId i = 0; i < nodes.size(); ++i) {
            if (!nodes[i].alive) continue;
            compact[i] = parent.size();
            parent.push_back(nodes[i].parent);
            leaf_vertex.push_back(nodes[i].vertex);
        }
        for (auto& p : parent) {
            if (p != kNoNode) p = compact[p];
        }
        EncodingTree t = TreeAccess::build(n_vertices, parent, leaf_vertex);
        TreeAccess::set_stats(t, node_stats(graph, t));
        return t;
    }
};

enum class MergeRule {
    pair,       // entropy change of the inserted binary node
    community,  // entropy change of reading each group as a community over its units
};

// Greedy pairwise merging of alpha's children (the units) into a binary
// hierarchy. Zero-volume children stay attached to alpha directly.
std::vector<NodeId> stretch_units(MutableTree& t, const StateGraph& graph, NodeId alpha, MergeRule rule) {
    const double root_vol = graph.volume();
    const double alpha_vol = t.nodes[alpha].volume;

    std::vector<NodeId> units;
    std::vector<NodeId> idle;
    for (NodeId c : t.nodes[alpha].children) (t.nodes[c].volume > 0.0 ? units : idle).push_back(c);
    std::sort(units.begin(), units.end());
    if (units.size() <= 1) return units;

    std::vector<std::size_t> unit_of(graph.size(), kNoNode);
    std::vector<std::vector<std::size_t>> members(units.size());
    for (std::size_t u = 0; u < units.size(); ++u) {
        t.collect_vertices(units[u], members[u]);
        for (std::size_t v : members[u]) unit_of[v] = u;
    }

    struct Group {
        NodeId node;
        double volume;
        double cut;
        std::map<std::size_t, double> adj;
        bool alive = true;
        double unit_cut = 0.0;      // sum of member-unit cuts
        double unit_cut_log = 0.0;  // sum of cut * log2(volume) over member units
    };
    std::vector<Group> groups;
    for (std::size_t u = 0; u < units.size(); ++u) {
        Group g{units[u], t.nodes[units[u]].volume, 0.0, {}};
        for (std::size_t v : members[u]) {
            for (const auto& nb : graph.neighbors(v)) {
                const std::size_t b = unit_of[nb.vertex];
                if (b == u) continue;
                g.cut += nb.weight;
                if (b != kNoNode && nb.weight > 0.0) g.adj[b] += nb.weight;
            }
        }
        g.unit_cut = g.cut;
        g.unit_cut_log = g.cut * std::log2(g.volume);
        groups.push_back(std::move(g));
    }

    // Entropy of a group acting as one community that directly holds its units.
    auto community_cost = [&](double cut, double vol, double s1, double s2) {
        return entropy_term(cut, vol, alpha_vol, root_vol) - (s2 - s1 * std::log2(vol)) / root_vol;
    };
    auto cost_of = [&](const Group& g) { return community_cost(g.cut, g.volume, g.unit_cut, g.unit_cut_log); };
    auto merge_delta = [&](std::size_t a, std::size_t b) {
        const Group& ga = groups[a];
        const Group& gb = groups[b];
        const auto it = ga.adj.find(b);
        const double w = it == ga.adj.end() ? 0.0 : it->second;
        if (rule == MergeRule::pair) {
            if (w <= 0.0 || alpha_vol <= 0.0) return 0.0;
            return (2.0 * w / root_vol) * std::log2((ga.volume + gb.volume) / alpha_vol);
        }
        const double merged = community_cost(std::max(0.0, ga.cut + gb.cut - 2.0 * w), ga.volume + gb.volume,
                                             ga.unit_cut + gb.unit_cut, ga.unit_cut_log + gb.unit_cut_log);
        return merged - cost_of(ga) - cost_of(gb);
    };
    auto pair_before = [&](std::size_t a1, std::size_t b1, std::size_t a2, std::size_t b2) {
        const auto k1 = std::minmax(groups[a1].node, groups[b1].node);
        const auto k2 = std::minmax(groups[a2].node, groups[b2].node);
        return k1 < k2;
    };

    std::size_t alive = groups.size();
    while (alive > 1) {
        std::size_t best_a = kNoNode, best_b = kNoNode;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < groups.size(); ++a) {
            if (!groups[a].alive) continue;
            for (std::size_t b = a + 1; b < groups.size(); ++b) {
                if (!groups[b].alive) continue;
                const double d = merge_delta(a, b);
                if (d < best - 1e-12 || (std::abs(d - best) <= 1e-12 && pair_before(a, b, best_a, best_b))) {
                    best = std::min(best, d);
                    best_a = a;
                    best_b = b;
                }
            }
        }
        Group& ga = groups[best_a];
        Group& gb = groups[best_b];
        const double w_ab = ga.adj.count(best_b) ? ga.adj.at(best_b) : 0.0;
        Group merged{kNoNode, ga.volume + gb.volume, ga.cut + gb.cut - 2.0 * w_ab, {}};
        merged.cut = std::max(0.0, merged.cut);
        merged.unit_cut = ga.unit_cut + gb.unit_cut;
        merged.unit_cut_log = ga.unit_cut_log + gb.unit_cut_log;
        merged.node = t.add(alpha, merged.volume, merged.cut);
        t.nodes[merged.node].children = {ga.node, gb.node};
        t.nodes[ga.node].parent = merged.node;
        t.nodes[gb.node].parent = merged.node;

        const std::size_t idx = groups.size();
        for (std::size_t src : {best_a, best_b}) {
            for (const auto& [c, w] : groups[src].adj) {
                if (c == best_a || c == best_b) continue;
                merged.adj[c] += w;
                groups[c].adj.erase(src);
                groups[c].adj[idx] += w;
            }
            groups[src].alive = false;
            groups[src].adj.clear();
        }
        groups.push_back(std::move(merged));
        --alive;
    }
    auto& ch = t.nodes[alpha].children;
    ch = idle;
    ch.push_back(groups.back().node);
    return units;
}

// Flattens the binary hierarchy between alpha and the units to exactly one
// community layer. Entropy of the result is additive over communities, so
// the best cut of the hierarchy is found exactly by recursion; units that end
// up directly under alpha get unary wrappers.
// Returns the entropy contributed by alpha's new subtree.
double compress_units(MutableTree& t, const StateGraph& graph, NodeId alpha, const std::vector<NodeId>& units) {
    const double root_vol = graph.volume();
    const double alpha_vol = t.nodes[alpha].volume;
    const std::set<NodeId> unit_set(units.begin(), units.end());
    auto term = [&](double cut, double vol, double parent_vol) { return entropy_term(cut, vol, parent_vol, root_vol); };

    // Entropy contributed by making x a community that directly holds the units below it.
    std::map<NodeId, double> as_community;
    std::map<NodeId, double> best;
    std::map<NodeId, bool> keep;  // x is a community in the optimum of its subtree
    std::function<std::vector<NodeId>(NodeId)> solve = [&](NodeId x) -> std::vector<NodeId> {
        std::vector<NodeId> below;
        if (unit_set.count(x)) {
            below = {x};
            best[x] = term(t.nodes[x].cut, t.nodes[x].volume, alpha_vol);
            keep[x] = true;
            return below;
        }
        double split = 0.0;
        for (NodeId c : t.nodes[x].children) {
            auto sub = solve(c);
            split += best[c];
            below.insert(below.end(), sub.begin(), sub.end());
        }
        double whole = term(t.nodes[x].cut, t.nodes[x].volume, alpha_vol);
        for (NodeId u : below) whole += term(t.nodes[u].cut, t.nodes[u].volume, t.nodes[x].volume);
        keep[x] = whole <= split;
        best[x] = keep[x] ? whole : split;
        return below;
    };

    std::vector<NodeId> communities;
    std::vector<NodeId> dead;
    std::function<void(NodeId)> collect = [&](NodeId x) {
        if (keep[x]) {
            communities.push_back(x);
            return;
        }
        dead.push_back(x);
        for (NodeId c : t.nodes[x].children) collect(c);
    };
    std::function<void(NodeId, std::vector<NodeId>&)> units_below = [&](NodeId x, std::vector<NodeId>& out) {
        if (unit_set.count(x)) {
            out.push_back(x);
            return;
        }
        for (NodeId c : t.nodes[x].children) units_below(c, out);
    };

    std::vector<NodeId> tops;
    for (NodeId c : t.nodes[alpha].children)
        if (unit_set.count(c) || t.nodes[c].vertex == kNoNode) tops.push_back(c);
    double cost = 0.0;
    for (NodeId top : tops) {
        solve(top);
        collect(top);
        cost += best[top];
    }
    {
        auto& ach = t.nodes[alpha].children;
        ach.erase(std::remove_if(ach.begin(), ach.end(), [&](NodeId c) { return std::count(tops.begin(), tops.end(), c); }),
                  ach.end());
    }
    std::function<void(NodeId)> kill_interior = [&](NodeId x) {
        for (NodeId c : t.nodes[x].children) {
            if (unit_set.count(c)) continue;
            kill_interior(c);
            t.nodes[c].alive = false;
            t.nodes[c].children.clear();
        }
    };
    for (NodeId x : communities) {
        NodeId holder = x;
        std::vector<NodeId> members;
        units_below(x, members);
        if (unit_set.count(x)) {
            holder = t.add(alpha, t.nodes[x].volume, t.nodes[x].cut);
        } else {
            kill_interior(x);
        }
        t.nodes[holder].parent = alpha;
        t.nodes[holder].children = members;
        for (NodeId u : members) t.nodes[u].parent = holder;
        t.nodes[alpha].children.push_back(holder);
    }
    for (NodeId x : dead) {
        t.nodes[x].alive = false;
        t.nodes[x].children.clear();
    }
    return cost;
}

// Local search over the community layer under alpha: moves units between
// communities (or into a fresh one) while entropy drops. Returns the final
// partition cost, comparable between calls on the same units.
double refine_communities(MutableTree& t, const StateGraph& graph, NodeId alpha) {
    const double root_vol = graph.volume();
    const double alpha_vol = t.nodes[alpha].volume;
    if (root_vol <= 0.0 || alpha_vol <= 0.0) return INFINITY;

    std::vector<NodeId> holders;
    for (NodeId c : t.nodes[alpha].children)
        if (t.nodes[c].vertex == kNoNode) holders.push_back(c);
    if (holders.empty()) return INFINITY;

    std::vector<NodeId> units;
    std::vector<std::size_t> group;  // unit -> index into communities
    for (std::size_t c = 0; c < holders.size(); ++c) {
        for (NodeId u : t.nodes[holders[c]].children) {
            units.push_back(u);
            group.push_back(c);
        }
    }
    const std::size_t k = units.size();
    std::vector<std::size_t> unit_of(graph.size(), kNoNode);
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<std::size_t> vs;
        t.collect_vertices(units[i], vs);
        for (std::size_t v : vs) unit_of[v] = i;
    }
    std::vector<Vec> w(k, Vec(k, 0.0));
    for (std::size_t v = 0; v < graph.size(); ++v) {
        if (unit_of[v] == kNoNode) continue;
        for (const auto& nb : graph.neighbors(v)) {
            const std::size_t b = unit_of[nb.vertex];
            if (b != kNoNode && b != unit_of[v]) w[unit_of[v]][b] += nb.weight;
        }
    }

    struct Community {
        double volume = 0.0;
        double cut = 0.0;
        double s1 = 0.0;  // sum of unit cuts
        double s2 = 0.0;  // sum of unit cut * log2(unit volume)
        std::size_t size = 0;
    };
    auto cost = [&](const Community& c) {
        if (c.size == 0) return 0.0;
        return entropy_term(c.cut, c.volume, alpha_vol, root_vol) - (c.s2 - c.s1 * std::log2(c.volume)) / root_vol;
    };
    std::vector<Community> comm(holders.size() + k);  // spare slots for new communities
    auto unit_cut = [&](std::size_t i) { return t.nodes[units[i]].cut; };
    auto unit_vol = [&](std::size_t i) { return t.nodes[units[i]].volume; };
    for (std::size_t c = 0; c < holders.size(); ++c) {
        comm[c].volume = t.nodes[holders[c]].volume;
        comm[c].cut = t.nodes[holders[c]].cut;
    }
    for (std::size_t i = 0; i < k; ++i) {
        auto& c = comm[group[i]];
        c.s1 += unit_cut(i);
        c.s2 += unit_cut(i) * std::log2(unit_vol(i));
        ++c.size;
    }
    auto moved = [&](Community c, std::size_t i, double w_in, bool join) {
        const double sign = join ? 1.0 : -1.0;
        c.volume += sign * unit_vol(i);
        c.cut = std::max(0.0, c.cut + sign * (unit_cut(i) - 2.0 * w_in));
        c.s1 += sign * unit_cut(i);
        c.s2 += sign * unit_cut(i) * std::log2(unit_vol(i));
        c.size = join ? c.size + 1 : c.size - 1;
        return c;
    };

    // Moves unit i into community d, returning the entropy change.
    auto apply = [&](std::vector<Community>& cs, std::vector<std::size_t>& gs, std::size_t i, std::size_t d) {
        Vec to(cs.size(), 0.0);
        for (std::size_t j = 0; j < k; ++j) to[gs[j]] += w[i][j];
        const std::size_t from = gs[i];
        const double before = cost(cs[from]) + cost(cs[d]);
        cs[from] = moved(cs[from], i, to[from], false);
        cs[d] = moved(cs[d], i, to[d], true);
        gs[i] = d;
        return cost(cs[from]) + cost(cs[d]) - before;
    };
    auto first_empty = [&](const std::vector<Community>& cs) {
        for (std::size_t d = 0; d < cs.size(); ++d)
            if (cs[d].size == 0) return d;
        return cs.size();
    };

    for (std::size_t pass = 0; pass < 4 * k + 16; ++pass) {
        double best = -1e-12;
        std::size_t best_unit = kNoNode, best_target = kNoNode;
        for (std::size_t i = 0; i < k; ++i) {
            Vec to(comm.size(), 0.0);
            for (std::size_t j = 0; j < k; ++j) to[group[j]] += w[i][j];
            const std::size_t from = group[i];
            const Community left = moved(comm[from], i, to[from], false);
            const double leave = cost(left) - cost(comm[from]);
            bool tried_empty = false;
            for (std::size_t d = 0; d < comm.size(); ++d) {
                if (d == from) continue;
                if (comm[d].size == 0) {
                    if (tried_empty) continue;
                    tried_empty = true;
                }
                const double delta = leave + cost(moved(comm[d], i, to[d], true)) - cost(comm[d]);
                if (delta < best) {
                    best = delta;
                    best_unit = i;
                    best_target = d;
                }
            }
        }
        if (best_unit != kNoNode) {
            apply(comm, group, best_unit, best_target);
            continue;
        }
        // No single move helps: try moving two units at most two hops apart
        // at once, each into a community next to the pair or a fresh one.
        std::size_t best_partner = kNoNode, best_partner_target = kNoNode;
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) {
                bool close = w[i][j] > 0.0;
                for (std::size_t u = 0; u < k && !close; ++u) close = w[i][u] > 0.0 && w[u][j] > 0.0;
                if (!close) continue;
                std::vector<std::size_t> near{first_empty(comm)};
                for (std::size_t u = 0; u < k; ++u)
                    if (w[i][u] > 0.0 || w[j][u] > 0.0) near.push_back(group[u]);
                std::sort(near.begin(), near.end());
                near.erase(std::unique(near.begin(), near.end()), near.end());
                for (std::size_t di : near) {
                    if (di == group[i]) continue;
                    for (std::size_t dj : near) {
                        if (dj == group[j]) continue;
                        auto cs = comm;
                        auto gs = group;
                        const double delta = apply(cs, gs, i, di) + apply(cs, gs, j, dj);
                        if (delta < best) {
                            best = delta;
                            best_unit = i;
                            best_target = di;
                            best_partner = j;
                            best_partner_target = dj;
                        }
                    }
                }
            }
        }
        if (best_unit == kNoNode) break;
        apply(comm, group, best_unit, best_target);
        apply(comm, group, best_partner, best_partner_target);
    }

    double total = 0.0;
    for (const auto& c : comm) total += cost(c);

    // Rebuild the community layer from the final assignment.
    auto& ach = t.nodes[alpha].children;
    ach.erase(std::remove_if(ach.begin(), ach.end(), [&](NodeId c) { return t.nodes[c].vertex == kNoNode; }), ach.end());
    for (NodeId h : holders) {
        t.nodes[h].alive = false;
        t.nodes[h].children.clear();
    }
    for (std::size_t c = 0; c < comm.size(); ++c) {
        if (comm[c].size == 0) continue;
        const NodeId holder = t.add(alpha, comm[c].volume, comm[c].cut);
        for (std::size_t i = 0; i < k; ++i) {
            if (group[i] != c) continue;
            t.nodes[holder].children.push_back(units[i]);
            t.nodes[units[i]].parent = holder;
        }
        t.nodes[alpha].children.push_back(holder);
    }
    return total;
}

// Inserts one community layer beneath every internal node at height h.
EncodingTree deepen_level(const StateGraph& graph, const EncodingTree& tree, std::size_t h) {
    MutableTree m = MutableTree::from(tree, node_stats(graph, tree));
    for (NodeId alpha : tree.nodes_at_height(h)) {
        if (tree.node(alpha).is_leaf()) continue;
        // Both merge orders seed a local search; keep the cheaper result.
        MutableTree alt = m;
        compress_units(m, graph, alpha, stretch_units(m, graph, alpha, MergeRule::pair));
        compress_units(alt, graph, alpha, stretch_units(alt, graph, alpha, MergeRule::community));
        const double by_pair = refine_communities(m, graph, alpha);
        const double by_community = refine_communities(alt, graph, alpha);
        if (by_community < by_pair - 1e-12) m = std::move(alt);
    }
    return m.finish(graph);
}

}  // namespace

EncodingTree EncodingTree::from_parents(const StateGraph& graph, const std::vector<NodeId>& parent,
                                        const std::vector<std::size_t>& leaf_vertex) {
    EncodingTree t = TreeAccess::build(graph.size(), parent, leaf_vertex);
    TreeAccess::set_stats(t, node_stats(graph, t));
    t.vertex_states = graph.vertices();
    t.dedupe_tol = graph.dedupe_tol;
    return t;
}

std::vector<NodeId> EncodingTree::nodes_at_height(std::size_t h) const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].height == h) out.push_back(i);
    return out;
}

NodeStats node_stats(const StateGraph& graph, const EncodingTree& tree) {
    require_same_vertices(graph, tree);
    const std::size_t n = tree.size();
    NodeStats s{Vec(n, 0.0), Vec(n, 0.0)};
    for (std::size_t i = n; i-- > 0;) {
        const auto& node = tree.node(i);
        if (node.is_leaf()) {
            s.volume[i] = graph.degree(node.vertices.front());
        }
        if (node.parent != kNoNode) s.volume[node.parent] += s.volume[i];
    }
    const std::size_t top = tree.height();
    for (const auto& e : graph.edges()) {
        NodeId a = tree.leaf_of(e.u);
        NodeId b = tree.leaf_of(e.v);
        // depth = top - height; climb the deeper side until the paths meet.
        while (a != b) {
            const std::size_t da = top - tree.node(a).height;
            const std::size_t db = top - tree.node(b).height;
            if (da >= db) {
                s.cut[a] += e.w;
                a = tree.node(a).parent;
            }
            if (db >= da) {
                s.cut[b] += e.w;
                b = tree.node(b).parent;
            }
        }
    }
    return s;
}

EncodingTree flat_tree(const StateGraph& graph) {
    if (graph.size() == 0) throw ValidationError("empty graph");
    const std::size_t n = graph.size();
    std::vector<NodeId> parent(n + 1, 0);
    std::vector<std::size_t> leaf(n + 1, kNoNode);
    parent[0] = kNoNode;
    for (std::size_t v = 0; v < n; ++v) leaf[v + 1] = v;
    return EncodingTree::from_parents(graph, parent, leaf);
}

double tree_entropy(const StateGraph& graph, const EncodingTree& tree) {
    const auto s = node_stats(graph, tree);
    const double root_vol = graph.volume();
    double h = 0.0;
    for (NodeId i = 1; i < tree.size(); ++i) {
        h += entropy_term(s.cut[i], s.volume[i], s.volume[tree.node(i).parent], root_vol);
    }
    return h;
}

double node_gain(const StateGraph& graph, const EncodingTree& tree, NodeId alpha) {
    if (alpha >= tree.size()) throw ValidationError("node id out of range");
    if (alpha == EncodingTree::kRoot) throw ValidationError("structural gain is undefined for the root node");
    const auto s = node_stats(graph, tree);
    return entropy_term(s.cut[alpha], s.volume[alpha], s.volume[tree.node(alpha).parent], graph.volume());
}

double node_gain(const EncodingTree& tree, NodeId alpha) {
    if (alpha >= tree.size()) throw ValidationError("node id out of range");
    if (alpha == EncodingTree::kRoot) throw ValidationError("structural gain is undefined for the root node");
    const auto& n = tree.node(alpha);
    return entropy_term(n.cut, n.volume, tree.node(n.parent).volume, tree.root_volume());
}

EncodingTree stretch(const StateGraph& graph, const EncodingTree& tree, NodeId alpha) {
    require_same_vertices(graph, tree);
    if (alpha >= tree.size() || tree.node(alpha).is_leaf()) throw ValidationError("stretch: alpha must be an internal node");
    for (NodeId c : tree.node(alpha).children) {
        if (!tree.node(c).is_leaf()) throw ValidationError("stretch precondition violated: alpha is not the root of an alpha-triangle");
    }
    MutableTree m = MutableTree::from(tree, node_stats(graph, tree));
    stretch_units(m, graph, alpha, MergeRule::pair);
    EncodingTree out = m.finish(graph);
    out.vertex_states = tree.vertex_states;
    out.dedupe_tol = tree.dedupe_tol;
    return out;
}

EncodingTree compress(const StateGraph& graph, const EncodingTree& tree, NodeId alpha) {
    require_same_vertices(graph, tree);
    if (alpha >= tree.size() || tree.node(alpha).is_leaf()) throw ValidationError("compress: alpha must be an internal node");
    const auto s = node_stats(graph, tree);
    std::size_t weighted_children = 0;
    for (NodeId c : tree.node(alpha).children) {
        if (tree.node(c).is_leaf() && s.volume[c] <= 0.0) continue;
        ++weighted_children;
    }
    if (weighted_children > 1) throw ValidationError("compress precondition violated: subtree is not a stretch output");
    std::vector<NodeId> units;
    std::vector<NodeId> stack(tree.node(alpha).children.begin(), tree.node(alpha).children.end());
    while (!stack.empty()) {
        const NodeId x = stack.back();
        stack.pop_back();
        const auto& n = tree.node(x);
        if (n.is_leaf()) {
            if (s.volume[x] > 0.0 || n.parent != alpha) units.push_back(x);
            continue;
        }
        if (n.children.size() != 2) throw ValidationError("compress precondition violated: subtree is not binary");
        for (NodeId c : n.children) stack.push_back(c);
    }
    std::sort(units.begin(), units.end());
    MutableTree m = MutableTree::from(tree, s);
    compress_units(m, graph, alpha, units);
    EncodingTree out = m.finish(graph);
    out.vertex_states = tree.vertex_states;
    out.dedupe_tol = tree.dedupe_tol;
    return out;
}

EncodingTree hcse_optimize(const StateGraph& graph, std::size_t max_height, std::vector<double>* trace) {
    if (max_height < 2) throw ValidationError("tree height must be at least 2");
    EncodingTree tree = flat_tree(graph);
    double entropy = tree_entropy(graph, tree);
    if (trace) trace->assign(1, entropy);
    while (tree.height() < max_height) {
        const std::size_t levels = tree.height();
        std::vector<EncodingTree> trials(levels);
        Vec trial_entropy(levels, 0.0);
        const auto n_levels = static_cast<long>(levels);
#pragma omp parallel for schedule(dynamic, 1)
        for (long i = 0; i < n_levels; ++i) {
            const auto h = static_cast<std::size_t>(i) + 1;
            trials[h - 1] = deepen_level(graph, tree, h);
            trial_entropy[h - 1] = tree_entropy(graph, trials[h - 1]);
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < levels; ++i) {
            if (trial_entropy[i] < trial_entropy[best]) best = i;
        }
        const double delta = trial_entropy[best] - entropy;
        if (!(delta < -1e-12)) break;
        tree = std::move(trials[best]);
        entropy = trial_entropy[best];
        if (trace) trace->push_back(entropy);
    }
    tree.vertex_states = graph.vertices();
    tree.dedupe_tol = graph.dedupe_tol;
    return tree;
}

LayerPartition layer_partition(const EncodingTree& tree, std::size_t h) {
    if (h < 1 || h >= tree.height()) {
        throw ValidationError("layer height " + std::to_string(h) + " out of range [1, " +
                              std::to_string(tree.height()) + ")");
    }
    LayerPartition p;
    p.h = h;
    p.community_of.resize(tree.vertex_count());
    std::set<NodeId> distinct;
    for (std::size_t v = 0; v < tree.vertex_count(); ++v) {
        NodeId x = tree.leaf_of(v);
        while (tree.node(x).height < h) x = tree.node(x).parent;
        p.community_of[v] = x;
        distinct.insert(x);
    }
    p.nodes.assign(distinct.begin(), distinct.end());
    return p;
}

double reweighted_entropy(const StateGraph& reweighted, const EncodingTree& tree) {
    require_same_vertices(reweighted, tree);
    return tree_entropy(reweighted, tree);
}

BoundReport bound_check(const StateGraph& reweighted, const EncodingTree& tree) {
    require_same_vertices(reweighted, tree);
    const auto s = node_stats(reweighted, tree);
    const double vol = reweighted.volume();
    BoundReport r;
    r.value = tree_entropy(reweighted, tree);
    r.upper = vol > 0.0 ? one_dim_entropy(reweighted) : 0.0;
    r.lower = r.upper;
    for (std::size_t h = 1; h < tree.height(); ++h) {
        double eta = 0.0;
        for (NodeId a : tree.nodes_at_height(h)) {
            const auto& n = tree.node(a);
            if (n.is_leaf() || s.volume[a] <= 0.0) continue;
            double child_cut = 0.0;
            for (NodeId c : n.children) child_cut += s.cut[c];
            eta = std::max(eta, (child_cut - s.cut[a]) / s.volume[a]);
        }
        double hu = 0.0;
        for (NodeId c : layer_partition(tree, h).nodes) {
            if (s.volume[c] > 0.0 && vol > 0.0) {
                const double p = s.volume[c] / vol;
                hu -= p * std::log2(p);
            }
        }
        r.eta.push_back(eta);
        r.layer_entropy.push_back(hu);
        r.lower -= eta * hu;
    }
    return r;
}

std::optional<std::string> check_tree(const EncodingTree& tree, const StateGraph* graph) {
    if (tree.size() == 0) return "empty tree";
    const auto& root = tree.node(EncodingTree::kRoot);
    if (root.parent != kNoNode) return "node 0 is not the root";
    if (root.vertices.size() != tree.vertex_count()) return "root does not cover every vertex";
    for (std::size_t v = 0; v < root.vertices.size(); ++v) {
        if (root.vertices[v] != v) return "root vertex set is not {0..n-1}";
    }
    for (NodeId i = 0; i < tree.size(); ++i) {
        const auto& n = tree.node(i);
        if (n.is_leaf()) {
            if (n.vertices.size() != 1) return "leaf " + std::to_string(i) + " is not a singleton";
            if (tree.leaf_of(n.vertices.front()) != i) return "leaf lookup inconsistent at node " + std::to_string(i);
            continue;
        }
        std::vector<std::size_t> joined;
        for (NodeId c : n.children) {
            if (tree.node(c).parent != i) return "child/parent link broken at node " + std::to_string(i);
            if (tree.node(c).height + 1 != n.height) return "height inconsistent at node " + std::to_string(c);
            joined.insert(joined.end(), tree.node(c).vertices.begin(), tree.node(c).vertices.end());
        }
        std::sort(joined.begin(), joined.end());
        if (std::adjacent_find(joined.begin(), joined.end()) != joined.end()) {
            return "children of node " + std::to_string(i) + " overlap";
        }
        if (joined != n.vertices) return "children of node " + std::to_string(i) + " do not cover it";
    }
    if (graph) {
        if (graph->size() != tree.vertex_count()) return "vertex-set mismatch";
        const auto s = node_stats(*graph, tree);
        for (NodeId i = 0; i < tree.size(); ++i) {
            const auto& n = tree.node(i);
            const double tol_v = 1e-9 * std::max(1.0, std::abs(s.volume[i]));
            const double tol_c = 1e-9 * std::max(1.0, std::abs(s.cut[i]));
            if (std::abs(n.volume - s.volume[i]) > tol_v) return "cached volume stale at node " + std::to_string(i);
            if (std::abs(n.cut - s.cut[i]) > tol_c) return "cached cut stale at node " + std::to_string(i);
        }
    }
    return std::nullopt;
}

std::string tree_to_json(const EncodingTree& tree) {
    nlohmann::ordered_json j;
    j["height"] = tree.height();
    j["vertex_count"] = tree.vertex_count();
    j["dedupe_tol"] = tree.dedupe_tol;
    j["vertices"] = tree.vertex_states;
    auto nodes = nlohmann::ordered_json::array();
    for (NodeId i = 0; i < tree.size(); ++i) {
        const auto& n = tree.node(i);
        nlohmann::ordered_json jn;
        jn["id"] = i;
        jn["parent"] = n.parent == kNoNode ? -1 : static_cast<long long>(n.parent);
        jn["height"] = n.height;
        if (n.is_leaf()) jn["vertices"] = n.vertices;
        jn["volume"] = n.volume;
        jn["cut"] = n.cut;
        nodes.push_back(std::move(jn));
    }
    j["nodes"] = std::move(nodes);
    return j.dump() + "\n";
}

EncodingTree tree_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        const auto& jn = j.at("nodes");
        const std::size_t n = jn.size();
        std::vector<NodeId> parent(n, kNoNode);
        std::vector<std::size_t> leaf(n, kNoNode);
        NodeStats stats{Vec(n, 0.0), Vec(n, 0.0)};
        for (const auto& x : jn) {
            const auto id = x.at("id").get<std::size_t>();
            if (id >= n) throw ValidationError("tree file: node id out of range");
            const auto p = x.at("parent").get<long long>();
            parent[id] = p < 0 ? kNoNode : static_cast<NodeId>(p);
            if (x.contains("vertices")) {
                const auto vs = x.at("vertices").get<std::vector<std::size_t>>();
                if (vs.size() != 1) throw ValidationError("tree file: leaf must list exactly one vertex");
                leaf[id] = vs.front();
            }
            stats.volume[id] = x.value("volume", 0.0);
            stats.cut[id] = x.value("cut", 0.0);
        }
        std::vector<NodeId> remap;
        EncodingTree t = TreeAccess::build(j.at("vertex_count").get<std::size_t>(), parent, leaf, &remap);
        NodeStats ordered{Vec(n, 0.0), Vec(n, 0.0)};
        for (std::size_t i = 0; i < n; ++i) {
            ordered.volume[remap[i]] = stats.volume[i];
            ordered.cut[remap[i]] = stats.cut[i];
        }
        TreeAccess::set_stats(t, ordered);
        t.vertex_states = j.value("vertices", std::vector<Vec>{});
        t.dedupe_tol = j.value("dedupe_tol", 1e-9);
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid tree file: ") + e.what());
    }
}

}  // namespace sihd
