#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "rapcontrol/value_store.hpp"

using namespace rap;

TEST_CASE("mixed-radix keys") {
    SECTION("all-zero vector maps to 0") {
        CHECK(mixed_radix_key({0, 0, 0}, {4, 5, 6}) == 0);
    }
    SECTION("worked example m=(2,3,4), w=(1,2,3)") {
        CHECK(mixed_radix_key({1, 2, 3}, {2, 3, 4}) == 1 + 2 * 2 + 3 * 6);
    }
    SECTION("bijective on the full grid") {
        const std::vector<std::int64_t> radices = {3, 3};
        std::set<std::uint64_t> keys;
        for (std::int32_t a = 0; a < 3; ++a)
            for (std::int32_t b = 0; b < 3; ++b) keys.insert(mixed_radix_key({a, b}, radices));
        CHECK(keys.size() == 9);
        CHECK(*keys.begin() == 0);
        CHECK(*keys.rbegin() == 8);
    }
    SECTION("digits outside their radix are contract violations") {
        CHECK_THROWS_AS(mixed_radix_key({3, 0}, {3, 3}), std::invalid_argument);
        CHECK_THROWS_AS(mixed_radix_key({-1, 0}, {3, 3}), std::invalid_argument);
    }
}

TEST_CASE("hash_index is the residue mod capacity") {
    CHECK(hash_index(23, 7) == 2);
    CHECK(hash_index(5, 7) == 5);
    CHECK(hash_index(12, 7) == 5);
    CHECK(hash_index(3, 100) == 3);
}

TEST_CASE("prime capacity selection") {
    CHECK(largest_prime_at_most(10) == 7);
    CHECK(largest_prime_at_most(13) == 13);
    CHECK(largest_prime_at_most(1000) == 997);
    CHECK(is_prime(HashQTable::capacity_for_budget(100000)));
}

TEST_CASE("write/read semantics") {
    // radices {10, 10}: keys 0..99; capacity 7 forces collisions.
    HashQTable table(7, {10, 10}, 0.0);

    SECTION("insert into an empty slot") {
        CHECK(table.write_entry({1, 0}, 5.0, 3) == WriteOutcome::Inserted);
        CHECK(table.read({1, 0}) == 5.0);
    }
    SECTION("same key updates in place") {
        table.write_entry({1, 0}, 5.0, 3);
        CHECK(table.write_entry({1, 0}, 9.0, 4) == WriteOutcome::Updated);
        CHECK(table.read({1, 0}) == 9.0);
    }
    SECTION("unseen pairs read the default") {
        CHECK(table.read({2, 2}) == 0.0);
        CHECK_FALSE(table.find({2, 2}).has_value());
        HashQTable optimistic(7, {10, 10}, 42.0);
        CHECK(optimistic.read({2, 2}) == 42.0);
    }
    SECTION("collision keeps the entry with the smaller time tag") {
        // keys 5 and 12 share slot 5 when capacity is 7
        CHECK(table.write_entry({5, 0}, 1.0, 3) == WriteOutcome::Inserted);
        CHECK(table.write_entry({2, 1}, 2.0, 5) == WriteOutcome::KeptOld);  // key 12, tag 5 > 3
        CHECK(table.read({5, 0}) == 1.0);
        CHECK_FALSE(table.find({2, 1}).has_value());
        CHECK(table.write_entry({2, 1}, 2.0, 1) == WriteOutcome::EvictedOld);  // tag 1 < 3
        CHECK(table.read({2, 1}) == 2.0);
        CHECK_FALSE(table.find({5, 0}).has_value());  // evicted entry reads the default again
    }
    SECTION("equal tags keep the resident entry") {
        table.write_entry({5, 0}, 1.0, 3);
        CHECK(table.write_entry({2, 1}, 2.0, 3) == WriteOutcome::KeptOld);
        CHECK(table.read({5, 0}) == 1.0);
    }
    SECTION("collision counter increments exactly on distinct-key clashes") {
        table.write_entry({5, 0}, 1.0, 3);
        table.write_entry({5, 0}, 2.0, 3);
        CHECK(table.stats().collisions == 0);
        table.write_entry({2, 1}, 2.0, 9);
        CHECK(table.stats().collisions == 1);
        CHECK(table.stats().evictions == 0);
    }
}

TEST_CASE("tabular mode: capacity at least the grid size never evicts") {
    const std::vector<std::int64_t> radices = {5, 4, 3};
    const std::uint64_t grid = 5 * 4 * 3;
    HashQTable table(largest_prime_at_most(97), radices, 0.0);  // 89 > 60
    REQUIRE(table.capacity() >= grid);
    std::int64_t tag = 0;
    for (std::int32_t a = 0; a < 5; ++a)
        for (std::int32_t b = 0; b < 4; ++b)
            for (std::int32_t c = 0; c < 3; ++c)
                table.write_entry({a, b, c}, a * 100.0 + b * 10 + c, tag++);
    CHECK(table.stats().collisions == 0);
    CHECK(table.stats().evictions == 0);
    for (std::int32_t a = 0; a < 5; ++a)
        for (std::int32_t b = 0; b < 4; ++b)
            for (std::int32_t c = 0; c < 3; ++c) CHECK(table.read({a, b, c}) == a * 100.0 + b * 10 + c);
}

TEST_CASE("oversized radix grids fall back to fingerprint identities") {
    // 40 components of radix 1000: the grid is astronomically larger than
    // 2^64, but writes and reads must still behave consistently.
    std::vector<std::int64_t> radices(40, 1000);
    HashQTable table(largest_prime_at_most(100003), radices, 0.0);
    FeatureVector a(40, 1), b(40, 1);
    b[39] = 2;
    table.write_entry(a, 7.0, 0);
    CHECK(table.read(a) == 7.0);
    CHECK_FALSE(table.find(b).has_value());
    CHECK_THROWS_AS(mixed_radix_key(a, radices), std::overflow_error);
}

TEST_CASE("clone copies entries, clear resets them") {
    HashQTable table(97, {10, 10}, 0.0);
    table.write_entry({3, 4}, 11.0, 1);
    auto copy = table.clone();
    CHECK(copy->read({3, 4}) == 11.0);
    table.clear();
    CHECK_FALSE(table.find({3, 4}).has_value());
    CHECK(copy->read({3, 4}) == 11.0);
}
