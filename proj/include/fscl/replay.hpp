#pragma once

#include <stdexcept>
#include <vector>

#include "fscl/taskgen.hpp"

namespace fscl {

// Exact-memory replay: keeps every training example ever seen, tagged with
// its task of origin, in insertion order. Capacity is unbounded; at
// few-shot scale the full history stays tiny.
class ReplayBuffer {
 public:
  void extend(const TaskDataset& task) {
    for (const auto& e : task.examples) {
      examples_.push_back(e);
      task_of_origin_.push_back(task.task_index);
    }
  }

  void clear() {
    examples_.clear();
    task_of_origin_.clear();
  }

  size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }

  const std::vector<LabeledExample>& examples() const { return examples_; }
  const std::vector<int>& task_of_origin() const { return task_of_origin_; }

 private:
  std::vector<LabeledExample> examples_;
  std::vector<int> task_of_origin_;
};

// Head-slot registry: global class ids in arrival order. Slot i is row i of
// the output layer.
class ClassIndex {
 public:
  // Registers any unseen ids, preserving arrival order; returns how many
  // were new.
  int register_task(const TaskDataset& task) {
    int added = 0;
    for (const auto& e : task.examples)
      if (!contains(e.class_id)) {
        ids_.push_back(e.class_id);
        ++added;
      }
    return added;
  }

  bool contains(long class_id) const {
    for (long id : ids_)
      if (id == class_id) return true;
    return false;
  }

  int slot_of(long class_id) const {
    for (size_t i = 0; i < ids_.size(); ++i)
      if (ids_[i] == class_id) return static_cast<int>(i);
    throw std::out_of_range("class " + std::to_string(class_id) +
                            " is not covered by the output head");
  }

  int size() const { return static_cast<int>(ids_.size()); }
  const std::vector<long>& ids() const { return ids_; }
  void set_ids(std::vector<long> ids) { ids_ = std::move(ids); }

 private:
  std::vector<long> ids_;
};

// Dataset flattened to training tensors with head-slot labels.
struct LabeledMatrix {
  Matrix x;
  std::vector<int> y;
};

inline LabeledMatrix to_labeled_matrix(
    const std::vector<LabeledExample>& examples, const ClassIndex& index) {
  LabeledMatrix out;
  std::vector<long> ids;
  dataset_to_matrix(examples, out.x, ids);
  out.y.resize(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) out.y[i] = index.slot_of(ids[i]);
  return out;
}

}  // namespace fscl
