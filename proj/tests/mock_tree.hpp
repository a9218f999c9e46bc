#pragma once

// Test-only synthetic tree: explicit nodes with parent links, tiers and
// frequencies. Lets the engine suites run against a fully controllable shape
// and doubles as the substrate for the reference demotion simulation.

#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

#include "treetier/adapter.hpp"
#include "treetier/node_meta.hpp"
#include "treetier/tiered_heap.hpp"

namespace treetier::testing {

struct MockNode {
  MockNode* parent = nullptr;
  std::vector<MockNode*> children;
  TierId tier = TierId::Slow;
  u32 depth = 0;
  AccessCounter freq;
  u64 key = 0;  // repr key; unique per node
  bool retired = false;
  TierHandle block;  // optional heap-backed accounting

  bool leaf() const { return children.empty(); }
};

class MockTree final : public TreeAdapter {
 public:
  explicit MockTree(TieredHeap* heap = nullptr, u32 node_bytes = 64)
      : heap_(heap), node_bytes_(node_bytes) {}

  MockNode* add_node(MockNode* parent, TierId tier) {
    auto n = std::make_unique<MockNode>();
    n->parent = parent;
    n->tier = tier;
    n->depth = parent ? parent->depth + 1 : 0;
    n->key = next_key_++;
    if (parent) parent->children.push_back(n.get());
    if (heap_) {
      n->block = heap_->alloc(node_bytes_, tier);
      if (!n->block) throw std::runtime_error("mock node allocation failed");
    }
    MockNode* raw = n.get();
    nodes_.push_back(std::move(n));
    by_key_[raw->key] = raw;
    if (!parent) root_ = raw;
    return raw;
  }

  MockNode* root() const { return root_; }
  const std::vector<std::unique_ptr<MockNode>>& nodes() const { return nodes_; }
  std::vector<MockNode*> leaves() const {
    std::vector<MockNode*> out;
    collect_leaves(root_, out);
    return out;
  }

  // Relocation order log, for asserting promotion order.
  const std::vector<MockNode*>& relocation_log() const { return log_; }
  void clear_log() { log_.clear(); }

  // ---- TreeAdapter -----------------------------------------------------------

  void for_each_leaf(const std::function<bool(const LeafView&)>& visit) override {
    for (MockNode* l : leaves())
      if (!visit(LeafView{l, l->key, l->freq.load(), l->tier})) return;
  }
  bool is_leaf(NodeRef n) const override { return node(n)->leaf(); }
  TierId tier_of(NodeRef n) const override { return node(n)->tier; }
  u16 freq_of(NodeRef n) const override { return node(n)->freq.load(); }
  void halve_freq(NodeRef n) override { node(n)->freq.halve(); }
  u32 depth_of(NodeRef n) const override { return node(n)->depth; }
  u32 height() const override {
    u32 h = 0;
    for (auto& n : nodes_)
      if (n->depth > h) h = n->depth;
    return h;
  }
  NodeRef parent_of(NodeRef n, u64) override {
    MockNode* m = node(n);
    return m->retired ? nullptr : m->parent;
  }
  PathProbe first_slow_on_path(u64 key) override {
    auto it = by_key_.find(key);
    if (it == by_key_.end()) return {};
    std::vector<MockNode*> path;
    for (MockNode* n = it->second; n; n = n->parent) path.push_back(n);
    for (auto r = path.rbegin(); r != path.rend(); ++r)
      if ((*r)->tier == TierId::Slow) return PathProbe{*r, (*r)->leaf()};
    return {};
  }
  RelocateResult relocate(NodeRef ref, u64, TierId target, bool require_children_slow) override {
    MockNode* n = node(ref);
    if (n->retired) return {RelocateStatus::Stale, nullptr};
    if (n->tier == target) return {RelocateStatus::Stale, nullptr};
    if (require_children_slow)
      for (MockNode* c : n->children)
        if (c->tier == TierId::Fast) return {RelocateStatus::GuardFailed, nullptr};

    // Continuous single-boundary verification at relocation time.
    if (target == TierId::Fast && n->parent && n->parent->tier != TierId::Fast)
      throw std::logic_error("mock: promotion under a slow parent");
    if (target == TierId::Slow)
      for (MockNode* c : n->children)
        if (c->tier == TierId::Fast)
          throw std::logic_error("mock: demotion above a fast child");

    if (heap_) {
      TierHandle fresh = heap_->alloc(node_bytes_, target);
      if (!fresh)
        return {target == TierId::Fast ? RelocateStatus::FastExhausted : RelocateStatus::Busy,
                nullptr};
      heap_->free(n->block);
      n->block = fresh;
    }
    n->tier = target;
    log_.push_back(n);
    return {RelocateStatus::Done, n->parent};
  }
  u64 footprint_at_depth(u32 depth) const override {
    u64 bytes = 0;
    for (auto& n : nodes_)
      if (n->depth == depth) bytes += node_bytes_;
    return bytes;
  }
  u64 leaf_node_bytes() const override { return node_bytes_; }

 private:
  static MockNode* node(NodeRef n) { return static_cast<MockNode*>(n); }
  void collect_leaves(MockNode* n, std::vector<MockNode*>& out) const {
    if (!n) return;
    if (n->leaf()) {
      out.push_back(n);
      return;
    }
    for (MockNode* c : n->children) collect_leaves(c, out);
  }

  TieredHeap* heap_;
  u32 node_bytes_;
  std::vector<std::unique_ptr<MockNode>> nodes_;
  std::map<u64, MockNode*> by_key_;
  MockNode* root_ = nullptr;
  u64 next_key_ = 1;
  std::vector<MockNode*> log_;
};

// Straightforward single-threaded simulation of the demotion algorithm: the
// independent oracle for run_demotions. Returns the final tier per node key.
inline std::map<u64, TierId> simulate_demotion(const MockTree& tree,
                                               const std::vector<MockNode*>& cold_seeds,
                                               int l_demote) {
  std::map<u64, TierId> tier;
  for (auto& n : tree.nodes()) tier[n->key] = n->tier;

  std::vector<const MockNode*> q(cold_seeds.begin(), cold_seeds.end());
  std::map<u64, bool> inq;
  for (auto* n : q) inq[n->key] = true;

  size_t head = 0;
  while (head < q.size()) {
    const MockNode* cur = q[head++];
    inq[cur->key] = false;
    if (int(cur->depth) < l_demote) continue;
    bool fast_child = false;
    for (const MockNode* c : cur->children)
      if (tier[c->key] == TierId::Fast) fast_child = true;
    if (!cur->leaf() && fast_child) continue;
    if (tier[cur->key] == TierId::Fast) tier[cur->key] = TierId::Slow;
    if (cur->parent && !inq[cur->parent->key]) {
      q.push_back(cur->parent);
      inq[cur->parent->key] = true;
    }
  }
  return tier;
}

}  // namespace treetier::testing
