#include "icbs/prune_state.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace icbs {

namespace {

// Guard band for count formulas: densities and fractions arrive as decimal
// literals whose binary representation can sit a few ulps off an exact
// multiple.
constexpr double kCountGuard = 1e-9;

std::int64_t floor_frac(double frac, std::int64_t count) {
    return static_cast<std::int64_t>(std::floor(frac * static_cast<double>(count) + kCountGuard));
}

}  // namespace

std::int64_t pruned_count_for_density(double density, std::int64_t total) {
    if (!(density > 0.0 && density < 1.0))
        throw std::invalid_argument("density must lie in (0, 1)");
    return static_cast<std::int64_t>(
        std::ceil((1.0 - density) * static_cast<double>(total) - kCountGuard));
}

PruneState init_prune(Mlp& model, const ScoreVector& scores, double density, double tabu_frac) {
    const std::int64_t total = model.num_prunable();
    if (scores.values.size() != total)
        throw std::invalid_argument("init_prune: score vector size mismatch");
    if (!model.has_snapshot()) throw std::logic_error("init_prune: model has no w0 snapshot");

    PruneState state;
    state.mask.assign(static_cast<std::size_t>(total), 0);
    state.fixed.assign(static_cast<std::size_t>(total), 0);
    state.tabu_flag.assign(static_cast<std::size_t>(total), 0);
    state.tabu.resize(static_cast<std::size_t>(model.num_layers()));
    for (int t : model.prunable())
        state.tabu[static_cast<std::size_t>(t)].capacity =
            floor_frac(tabu_frac, model.tensor_weight_count(t));

    state.target_pruned = pruned_count_for_density(density, total);
    std::vector<std::int64_t> all(static_cast<std::size_t>(total));
    std::iota(all.begin(), all.end(), 0);
    for (std::int64_t g : lowest_k(scores, state.target_pruned, all)) {
        state.mask[static_cast<std::size_t>(g)] = 1;
        model.set_current_weight(g, 0.0);
    }
    state.pruned_count = state.target_pruned;
    return state;
}

void fix_weights(PruneState& state, const ScoreVector& scores, double fix_frac_prune,
                 double fix_frac_keep) {
    if (fix_frac_prune < 0.0 || fix_frac_prune >= 1.0 || fix_frac_keep < 0.0 ||
        fix_frac_keep >= 1.0)
        throw std::invalid_argument("fix_weights: fractions must lie in [0, 1)");

    std::vector<std::int64_t> pruned;
    std::vector<std::int64_t> kept;
    pruned.reserve(static_cast<std::size_t>(state.pruned_count));
    kept.reserve(state.mask.size() - static_cast<std::size_t>(state.pruned_count));
    for (std::int64_t g = 0; g < static_cast<std::int64_t>(state.mask.size()); ++g)
        (state.is_pruned(g) ? pruned : kept).push_back(g);

    state.fixed_prune = lowest_k(scores, floor_frac(fix_frac_prune,
                                                    static_cast<std::int64_t>(pruned.size())),
                                 pruned);
    state.fixed_keep = highest_k(scores, floor_frac(fix_frac_keep,
                                                    static_cast<std::int64_t>(kept.size())),
                                 kept);
    std::fill(state.fixed.begin(), state.fixed.end(), 0);
    for (std::int64_t g : state.fixed_prune) state.fixed[static_cast<std::size_t>(g)] = 1;
    for (std::int64_t g : state.fixed_keep) state.fixed[static_cast<std::size_t>(g)] = 2;
}

void tabu_push(PruneState& state, const Mlp& model, int tensor,
               std::span<const std::int64_t> indices) {
    auto& queue = state.tabu[static_cast<std::size_t>(tensor)];
    const std::int64_t offset = model.tensor_offset(tensor);
    const std::int64_t count = model.tensor_weight_count(tensor);
    for (std::int64_t g : indices) {
        if (g < offset || g >= offset + count)
            throw std::invalid_argument("tabu_push: index not in tensor");
        if (state.tabu_flag[static_cast<std::size_t>(g)]) continue;  // already a member
        queue.fifo.push_back(g);
        state.tabu_flag[static_cast<std::size_t>(g)] = 1;
    }
    while (static_cast<std::int64_t>(queue.fifo.size()) > queue.capacity) {
        state.tabu_flag[static_cast<std::size_t>(queue.fifo.front())] = 0;
        queue.fifo.pop_front();
    }
}

std::int64_t tabu_make_room(PruneState& state, const Mlp& model, int tensor,
                            std::int64_t want_pruned, std::int64_t want_kept) {
    auto& queue = state.tabu[static_cast<std::size_t>(tensor)];
    const std::int64_t offset = model.tensor_offset(tensor);
    const std::int64_t count = model.tensor_weight_count(tensor);

    std::int64_t avail_pruned = 0;
    std::int64_t avail_kept = 0;
    for (std::int64_t g = offset; g < offset + count; ++g) {
        if (state.is_fixed(g) || state.is_tabu(g)) continue;
        (state.is_pruned(g) ? avail_pruned : avail_kept) += 1;
    }

    std::int64_t released = 0;
    while ((avail_pruned < want_pruned || avail_kept < want_kept) && !queue.fifo.empty()) {
        const std::int64_t g = queue.fifo.front();
        queue.fifo.pop_front();
        state.tabu_flag[static_cast<std::size_t>(g)] = 0;
        ++released;
        if (!state.is_fixed(g)) (state.is_pruned(g) ? avail_pruned : avail_kept) += 1;
    }
    return released;
}

std::vector<std::int64_t> tabu_filter(const PruneState& state,
                                      std::span<const std::int64_t> candidates) {
    std::vector<std::int64_t> out;
    out.reserve(candidates.size());
    for (std::int64_t g : candidates)
        if (!state.is_tabu(g)) out.push_back(g);
    return out;
}

void apply_solution(PruneState& state, Mlp& model, std::span<const std::int64_t> block_indices,
                    std::span<const std::uint8_t> x) {
    if (block_indices.size() != x.size())
        throw std::invalid_argument("apply_solution: solution size mismatch");

    std::int64_t incumbent = 0;
    std::int64_t proposed = 0;
    for (std::size_t i = 0; i < block_indices.size(); ++i) {
        const std::int64_t g = block_indices[i];
        if (state.is_fixed(g))
            throw std::invalid_argument("apply_solution: block touches fixed index " +
                                        std::to_string(g));
        incumbent += state.is_pruned(g) ? 1 : 0;
        proposed += x[i] ? 1 : 0;
    }
    if (incumbent != proposed)
        throw std::invalid_argument("apply_solution: cardinality violation (block holds " +
                                    std::to_string(incumbent) + " pruned, solution prunes " +
                                    std::to_string(proposed) + ")");

    for (std::size_t i = 0; i < block_indices.size(); ++i) {
        const std::int64_t g = block_indices[i];
        if (x[i]) {
            state.mask[static_cast<std::size_t>(g)] = 1;
            model.set_current_weight(g, 0.0);
        } else {
            state.mask[static_cast<std::size_t>(g)] = 0;
            model.set_current_weight(g, model.original_weight(g));
        }
    }
}

std::vector<std::uint8_t> pack_mask(const std::vector<std::uint8_t>& mask) {
    std::vector<std::uint8_t> packed((mask.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    return packed;
}

std::vector<std::uint8_t> unpack_mask(const std::vector<std::uint8_t>& packed, std::int64_t bits) {
    if (packed.size() != static_cast<std::size_t>((bits + 7) / 8))
        throw std::invalid_argument("unpack_mask: blob size mismatch");
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(bits), 0);
    for (std::int64_t i = 0; i < bits; ++i)
        mask[static_cast<std::size_t>(i)] =
            (packed[static_cast<std::size_t>(i) / 8] >> (i % 8)) & 1u;
    return mask;
}

}  // namespace icbs
