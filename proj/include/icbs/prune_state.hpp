#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "icbs/mlp.hpp"
#include "icbs/scoring.hpp"

namespace icbs {

// Authoritative pruning bookkeeping. Invariants held at every step:
//   popcount(mask) == target_pruned,
//   fixed_prune subset of the pruned set, fixed_keep disjoint from it,
//   mask bit 1 <=> wc == 0, mask bit 0 <=> wc == w0,
//   every tabu queue within its capacity.
struct PruneState {
    std::vector<std::uint8_t> mask;   // 1 = pruned, indexed by global weight index
    std::vector<std::uint8_t> fixed;  // 0 free, 1 fixed-prune, 2 fixed-keep
    std::vector<std::int64_t> fixed_prune;  // sorted
    std::vector<std::int64_t> fixed_keep;   // sorted

    struct Tabu {
        std::deque<std::int64_t> fifo;
        std::int64_t capacity = 0;
    };
    std::vector<Tabu> tabu;               // one queue per tensor id
    std::vector<std::uint8_t> tabu_flag;  // global-index membership bitmap

    std::int64_t pruned_count = 0;
    std::int64_t target_pruned = 0;

    bool is_pruned(std::int64_t g) const { return mask[static_cast<std::size_t>(g)] != 0; }
    bool is_fixed(std::int64_t g) const { return fixed[static_cast<std::size_t>(g)] != 0; }
    bool is_tabu(std::int64_t g) const { return tabu_flag[static_cast<std::size_t>(g)] != 0; }
};

// ceil((1-d) * N) guarded against the usual binary-fraction drift.
std::int64_t pruned_count_for_density(double density, std::int64_t total);

// Prunes the ceil((1-d)N) lowest-scoring weights: sets mask bits and zeroes
// the corresponding model weights. Tabu queues get capacity
// floor(tabu_frac * layer_size).
PruneState init_prune(Mlp& model, const ScoreVector& scores, double density,
                      double tabu_frac = 0.0);

// Permanently commits floor(fix_frac_prune * pruned) lowest-scoring pruned
// weights and floor(fix_frac_keep * kept) highest-scoring kept weights.
void fix_weights(PruneState& state, const ScoreVector& scores, double fix_frac_prune,
                 double fix_frac_keep);

// FIFO push with eviction beyond capacity; indices must belong to `tensor`.
void tabu_push(PruneState& state, const Mlp& model, int tensor,
               std::span<const std::int64_t> indices);

// Early FIFO eviction: releases the oldest tabu entries of `tensor` until
// the layer holds at least want_pruned free non-tabu pruned weights and
// want_kept free non-tabu kept weights (or the queue empties). Keeps a layer
// stepping when its scarce side would otherwise stay tabu forever. Returns
// the number of entries released.
std::int64_t tabu_make_room(PruneState& state, const Mlp& model, int tensor,
                            std::int64_t want_pruned, std::int64_t want_kept);

// Candidates minus current tabu members.
std::vector<std::int64_t> tabu_filter(const PruneState& state,
                                      std::span<const std::int64_t> candidates);

// Applies a block solution: x_i = 1 prunes (wc = 0), x_i = 0 restores
// (wc = w0). The solution must prune exactly as many block members as were
// pruned on entry and may not touch fixed indices; violations throw and leave
// the state untouched.
void apply_solution(PruneState& state, Mlp& model, std::span<const std::int64_t> block_indices,
                    std::span<const std::uint8_t> x);

// Bit-packed mask blob (LSB-first within each byte) for persistence.
std::vector<std::uint8_t> pack_mask(const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> unpack_mask(const std::vector<std::uint8_t>& packed, std::int64_t bits);

}  // namespace icbs
