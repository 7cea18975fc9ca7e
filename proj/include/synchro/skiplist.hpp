#pragma once

#include <atomic>
#include <cassert>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

namespace synchro {

// Ordered set with one writer and any number of lock-free readers.
//
// Nodes are never removed before the list itself is destroyed, so readers can follow
// pointers without coordination. Insert publishes a node level by level with release
// stores; readers traverse with acquire loads. Writers must be externally serialized.
template <typename T, typename Compare>
class SkipList {
  struct Node;

 public:
  static constexpr int kMaxHeight = 16;

  explicit SkipList(Compare cmp = Compare(), std::uint64_t seed = 0xdeadbeef)
      : cmp_(cmp), head_(NewNode(T{}, kMaxHeight)), rng_(seed) {}

  SkipList(const SkipList&) = delete;
  SkipList& operator=(const SkipList&) = delete;

  // Requires: no element comparing equal to value is present.
  void insert(T value) {
    Node* prev[kMaxHeight];
    Node* x = FindGreaterOrEqual(value, prev);
    assert(x == nullptr || cmp_(value, x->value) || cmp_(x->value, value));
    (void)x;

    const int height = RandomHeight();
    const int cur = max_height_.load(std::memory_order_relaxed);
    if (height > cur) {
      for (int i = cur; i < height; ++i) prev[i] = head_;
      max_height_.store(height, std::memory_order_relaxed);
    }
    Node* n = NewNode(std::move(value), height);
    for (int i = 0; i < height; ++i) {
      n->next_relaxed(i, prev[i]->next_relaxed(i));
      prev[i]->set_next(i, n);
    }
    size_.fetch_add(1, std::memory_order_release);
  }

  std::size_t size() const { return size_.load(std::memory_order_acquire); }

  class Iterator {
   public:
    explicit Iterator(const SkipList* list) : list_(list), node_(nullptr) {}

    bool valid() const { return node_ != nullptr; }
    const T& value() const {
      assert(valid());
      return node_->value;
    }
    void next() {
      assert(valid());
      node_ = node_->next(0);
    }
    // Positions at the first element >= target.
    void seek(const T& target) { node_ = list_->FindGreaterOrEqual(target, nullptr); }
    void seek_to_first() { node_ = list_->head_->next(0); }

   private:
    const SkipList* list_;
    const Node* node_;
  };

 private:
  struct Node {
    T value;
    int height;
    std::unique_ptr<std::atomic<Node*>[]> links;

    Node(T v, int h) : value(std::move(v)), height(h), links(new std::atomic<Node*>[h]) {
      for (int i = 0; i < h; ++i) links[i].store(nullptr, std::memory_order_relaxed);
    }
    Node* next(int level) const { return links[level].load(std::memory_order_acquire); }
    void set_next(int level, Node* n) { links[level].store(n, std::memory_order_release); }
    Node* next_relaxed(int level) const { return links[level].load(std::memory_order_relaxed); }
    void next_relaxed(int level, Node* n) { links[level].store(n, std::memory_order_relaxed); }
  };

  Node* NewNode(T value, int height) {
    nodes_.push_back(std::make_unique<Node>(std::move(value), height));
    return nodes_.back().get();
  }

  int RandomHeight() {
    int height = 1;
    while (height < kMaxHeight && (rng_() & 3) == 0) ++height;
    return height;
  }

  Node* FindGreaterOrEqual(const T& target, Node** prev) const {
    Node* x = head_;
    int level = max_height_.load(std::memory_order_relaxed) - 1;
    while (true) {
      Node* next = x->next(level);
      if (next != nullptr && cmp_(next->value, target)) {
        x = next;
      } else {
        if (prev != nullptr) prev[level] = x;
        if (level == 0) return next;
        --level;
      }
    }
  }

  Compare cmp_;
  std::vector<std::unique_ptr<Node>> nodes_;  // writer-only
  Node* head_;
  std::atomic<int> max_height_{1};
  std::atomic<std::size_t> size_{0};
  std::minstd_rand rng_;
};

}  // namespace synchro
