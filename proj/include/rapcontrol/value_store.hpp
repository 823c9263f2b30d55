#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rapcontrol/features.hpp"

namespace rap {

/**
 * Storage interface for action-value estimates keyed by packed feature
 * vectors. Two implementations: a mixed-radix hash table (this header) and a
 * ν-SVR regression store (svr.hpp). The backends are mutually exclusive per
 * run.
 */
class QValueStore {
public:
    virtual ~QValueStore() = default;

    /// Stored estimate, or nullopt for pairs the store has never seen.
    virtual std::optional<double> find(const FeatureVector& v) const = 0;

    /// Stored estimate with the default Q0 for unseen pairs.
    double read(const FeatureVector& v) const { return find(v).value_or(default_value()); }

    /// Stores an estimate; `time_tag` is the current-time component of the
    /// originating state, used by the hash table's collision rule.
    virtual void write(const FeatureVector& v, double value, std::int64_t time_tag) = 0;

    /// Episode boundary hook (the regression store refits here).
    virtual void end_episode(std::int64_t episode) { (void)episode; }

    virtual double default_value() const = 0;

    virtual std::unique_ptr<QValueStore> clone() const = 0;
};

/**
 * Mixed-radix key of a packed feature vector: the digits w_i with radices m_i
 * read as a number, φ(w) = Σ w_i · Π_{j<i} m_j. Bijective over the digit
 * grid. Requires the grid size Π m_i to fit in 64 bits; the hash table falls
 * back to digit fingerprints past that (see HashQTable).
 */
inline std::uint64_t mixed_radix_key(const FeatureVector& v, const std::vector<std::int64_t>& radices) {
    if (v.size() != radices.size())
        throw std::invalid_argument("mixed_radix_key: dimension mismatch");
    std::uint64_t key = 0;
    std::uint64_t place = 1;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < 0 || static_cast<std::int64_t>(v[i]) >= radices[i])
            throw std::invalid_argument("mixed_radix_key: component " + std::to_string(i) +
                                        " out of radix");
        std::uint64_t term;
        if (__builtin_mul_overflow(static_cast<std::uint64_t>(v[i]), place, &term) ||
            __builtin_add_overflow(key, term, &key))
            throw std::overflow_error("mixed_radix_key: grid exceeds 64-bit key space");
        if (i + 1 < v.size() &&
            __builtin_mul_overflow(place, static_cast<std::uint64_t>(radices[i]), &place))
            throw std::overflow_error("mixed_radix_key: grid exceeds 64-bit key space");
    }
    return key;
}

/// Memory position of a key in a table of capacity d: the residue mod d.
inline std::uint64_t hash_index(std::uint64_t key, std::uint64_t capacity) {
    if (capacity == 0) throw std::invalid_argument("hash_index: zero capacity");
    return key % capacity;
}

inline bool is_prime(std::uint64_t n) {
    if (n < 2) return false;
    for (std::uint64_t p = 2; p * p <= n; ++p)
        if (n % p == 0) return false;
    return true;
}

inline std::uint64_t largest_prime_at_most(std::uint64_t n) {
    for (std::uint64_t c = n; c >= 2; --c)
        if (is_prime(c)) return c;
    throw std::invalid_argument("largest_prime_at_most: no prime below " + std::to_string(n));
}

enum class WriteOutcome { Inserted, Updated, KeptOld, EvictedOld };

/**
 * Fixed-capacity hash table of action-value estimates. Feature vectors map
 * to slots through their mixed-radix key modulo a prime capacity; each slot
 * holds one entry. On a collision between distinct keys the entry whose
 * originating state has the smaller current-time component is kept — states
 * near the initial state appear more often during execution. Ties keep the
 * resident entry.
 *
 * The slot index is always the exact residue of the mixed-radix key (it is
 * accumulated mod d), but the identity key stored in a slot degrades to a
 * 64-bit digit fingerprint when the radix grid overflows 64 bits.
 *
 * Concurrency: every slot field is individually atomic, so concurrent
 * readers never see torn values; racing writers may lose updates slot-wise
 * (last writer wins). With the capacity at least the grid size no collisions
 * can occur at all, which gives an exact tabular mode for small problems.
 */
class HashQTable final : public QValueStore {
public:
    struct Stats {
        std::uint64_t reads = 0;
        std::uint64_t hits = 0;
        std::uint64_t misses = 0;
        std::uint64_t writes = 0;
        std::uint64_t collisions = 0;
        std::uint64_t evictions = 0;
        std::uint64_t occupied = 0;
        double load_factor = 0.0;
    };

    HashQTable(std::uint64_t capacity, std::vector<std::int64_t> radices, double q0 = 0.0)
        : capacity_(capacity), radices_(std::move(radices)), q0_(q0), slots_(capacity) {
        if (capacity_ == 0) throw std::invalid_argument("HashQTable: zero capacity");
        if (capacity_ >= (std::uint64_t{1} << 32))
            throw std::invalid_argument("HashQTable: capacity must fit 32 bits");
        grid_fits_ = true;
        std::uint64_t grid = 1;
        for (std::int64_t m : radices_) {
            if (m < 1) throw std::invalid_argument("HashQTable: radix < 1");
            if (__builtin_mul_overflow(grid, static_cast<std::uint64_t>(m), &grid)) {
                grid_fits_ = false;
                break;
            }
        }
        for (auto& s : slots_) {
            s.key.store(kEmpty, std::memory_order_relaxed);
            s.value.store(0.0, std::memory_order_relaxed);
            s.tag.store(0, std::memory_order_relaxed);
        }
    }

    /// Table sized to the largest prime within a memory budget.
    static std::uint64_t capacity_for_budget(std::uint64_t max_entries) {
        return largest_prime_at_most(std::max<std::uint64_t>(2, max_entries));
    }

    std::uint64_t capacity() const { return capacity_; }
    const std::vector<std::int64_t>& radices() const { return radices_; }

    std::optional<double> find(const FeatureVector& v) const override {
        const std::uint64_t key = identity_key(v);
        const Slot& slot = slots_[slot_index(v)];
        reads_.fetch_add(1, std::memory_order_relaxed);
        if (slot.key.load(std::memory_order_acquire) == key) {
            hits_.fetch_add(1, std::memory_order_relaxed);
            return slot.value.load(std::memory_order_acquire);
        }
        misses_.fetch_add(1, std::memory_order_relaxed);
        return std::nullopt;
    }

    WriteOutcome write_entry(const FeatureVector& v, double value, std::int64_t time_tag) {
        const std::uint64_t key = identity_key(v);
        Slot& slot = slots_[slot_index(v)];
        writes_.fetch_add(1, std::memory_order_relaxed);
        const std::uint64_t resident = slot.key.load(std::memory_order_acquire);
        if (resident == kEmpty) {
            slot.value.store(value, std::memory_order_release);
            slot.tag.store(time_tag, std::memory_order_release);
            slot.key.store(key, std::memory_order_release);
            occupied_.fetch_add(1, std::memory_order_relaxed);
            return WriteOutcome::Inserted;
        }
        if (resident == key) {
            slot.value.store(value, std::memory_order_release);
            slot.tag.store(time_tag, std::memory_order_release);
            return WriteOutcome::Updated;
        }
        collisions_.fetch_add(1, std::memory_order_relaxed);
        if (time_tag < slot.tag.load(std::memory_order_acquire)) {
            slot.value.store(value, std::memory_order_release);
            slot.tag.store(time_tag, std::memory_order_release);
            slot.key.store(key, std::memory_order_release);
            evictions_.fetch_add(1, std::memory_order_relaxed);
            return WriteOutcome::EvictedOld;
        }
        return WriteOutcome::KeptOld;
    }

    void write(const FeatureVector& v, double value, std::int64_t time_tag) override {
        write_entry(v, value, time_tag);
    }

    double default_value() const override { return q0_; }

    std::unique_ptr<QValueStore> clone() const override {
        auto copy = std::make_unique<HashQTable>(capacity_, radices_, q0_);
        for (std::size_t i = 0; i < slots_.size(); ++i) {
            copy->slots_[i].key.store(slots_[i].key.load(std::memory_order_relaxed),
                                      std::memory_order_relaxed);
            copy->slots_[i].value.store(slots_[i].value.load(std::memory_order_relaxed),
                                        std::memory_order_relaxed);
            copy->slots_[i].tag.store(slots_[i].tag.load(std::memory_order_relaxed),
                                      std::memory_order_relaxed);
        }
        copy->occupied_.store(occupied_.load(std::memory_order_relaxed), std::memory_order_relaxed);
        return copy;
    }

    void clear() {
        for (auto& s : slots_) s.key.store(kEmpty, std::memory_order_relaxed);
        occupied_.store(0, std::memory_order_relaxed);
    }

    Stats stats() const {
        Stats s;
        s.reads = reads_.load(std::memory_order_relaxed);
        s.hits = hits_.load(std::memory_order_relaxed);
        s.misses = misses_.load(std::memory_order_relaxed);
        s.writes = writes_.load(std::memory_order_relaxed);
        s.collisions = collisions_.load(std::memory_order_relaxed);
        s.evictions = evictions_.load(std::memory_order_relaxed);
        s.occupied = occupied_.load(std::memory_order_relaxed);
        s.load_factor = static_cast<double>(s.occupied) / static_cast<double>(capacity_);
        return s;
    }

    /// Exact residue of the mixed-radix key, accumulated mod capacity so the
    /// index is well defined even when the full key overflows 64 bits.
    std::uint64_t slot_index(const FeatureVector& v) const {
        if (v.size() != radices_.size())
            throw std::invalid_argument("HashQTable: dimension mismatch");
        std::uint64_t idx = 0;
        std::uint64_t place = 1;  // Π m_j mod d
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] < 0 || static_cast<std::int64_t>(v[i]) >= radices_[i])
                throw std::invalid_argument("HashQTable: component " + std::to_string(i) +
                                            " out of radix");
            idx = (idx + static_cast<std::uint64_t>(v[i]) % capacity_ * place) % capacity_;
            place = place * (static_cast<std::uint64_t>(radices_[i]) % capacity_) % capacity_;
        }
        return idx;
    }

private:
    static constexpr std::uint64_t kEmpty = ~std::uint64_t{0};

    std::uint64_t identity_key(const FeatureVector& v) const {
        if (grid_fits_) return mixed_radix_key(v, radices_);
        std::uint64_t fp = fingerprint(v);
        return fp == kEmpty ? kEmpty - 1 : fp;
    }

    struct Slot {
        std::atomic<std::uint64_t> key;
        std::atomic<double> value;
        std::atomic<std::int64_t> tag;
    };

    std::uint64_t capacity_;
    std::vector<std::int64_t> radices_;
    double q0_;
    bool grid_fits_ = true;
    std::vector<Slot> slots_;
    mutable std::atomic<std::uint64_t> reads_{0};
    mutable std::atomic<std::uint64_t> hits_{0};
    mutable std::atomic<std::uint64_t> misses_{0};
    std::atomic<std::uint64_t> writes_{0};
    std::atomic<std::uint64_t> collisions_{0};
    std::atomic<std::uint64_t> evictions_{0};
    std::atomic<std::uint64_t> occupied_{0};
};

}  // namespace rap
