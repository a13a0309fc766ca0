// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <functional>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "paretogen/error.hpp"
#include "paretogen/rng.hpp"

namespace paretogen {

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 21;

struct Site {
    std::string name;
    int cardinality = 2;

    bool operator==(const Site&) const = default;
};

/// An architecture: one categorical token per decision site, in site order.
struct Architecture {
    std::vector<int> tokens;

    auto operator<=>(const Architecture&) const = default;
    bool operator==(const Architecture&) const = default;

    std::size_t size() const noexcept { return tokens.size(); }
    int operator[](std::size_t i) const { return tokens[i]; }
};

inline std::string to_string(const Architecture& arch);

/// Ordered list of decision sites. Site 0 is the most significant digit of
/// the lexicographic enumeration order.
class SearchSpace {
public:
    SearchSpace() = default;

    explicit SearchSpace(std::vector<Site> sites) : sites_(std::move(sites)) {
        if (sites_.empty())
            throw ConfigError("search space needs at least one site");
        offsets_.reserve(sites_.size());
        std::size_t off = 0;
        for (const auto& s : sites_) {
            if (s.cardinality < 2)
                throw ConfigError("site '" + s.name + "' has cardinality " + std::to_string(s.cardinality) +
                                  " (needs >= 2)");
            offsets_.push_back(off);
            off += static_cast<std::size_t>(s.cardinality);
            if (!overflow_) {
                const auto v = static_cast<std::uint64_t>(s.cardinality);
                if (total_ > std::numeric_limits<std::uint64_t>::max() / v) {
                    overflow_ = true;
                    total_ = std::numeric_limits<std::uint64_t>::max();
                } else {
                    total_ *= v;
                }
            }
        }
        encoding_width_ = off;
    }

    /// Convenience: sites named "s0", "s1", ... with the given cardinalities.
    static SearchSpace uniform(std::span<const int> cardinalities) {
        std::vector<Site> sites;
        for (std::size_t i = 0; i < cardinalities.size(); ++i)
            sites.push_back({"s" + std::to_string(i), cardinalities[i]});
        return SearchSpace(std::move(sites));
    }
    static SearchSpace uniform(std::initializer_list<int> cardinalities) {
        return uniform(std::span<const int>(cardinalities.begin(), cardinalities.size()));
    }
    static SearchSpace repeated(int cardinality, std::size_t count) {
        return uniform(std::vector<int>(count, cardinality));
    }

    std::size_t num_sites() const noexcept { return sites_.size(); }
    const std::vector<Site>& sites() const noexcept { return sites_; }
    int cardinality(std::size_t i) const { return sites_[i].cardinality; }
    std::size_t offset(std::size_t i) const { return offsets_[i]; }
    std::size_t encoding_width() const noexcept { return encoding_width_; }
    int max_cardinality() const {
        int m = 0;
        for (const auto& s : sites_) m = std::max(m, s.cardinality);
        return m;
    }

    /// Product of cardinalities, saturated at uint64 max when overflowed() is set.
    std::uint64_t total_size() const noexcept { return total_; }
    bool overflowed() const noexcept { return overflow_; }

    bool contains(const Architecture& arch) const noexcept {
        if (arch.tokens.size() != sites_.size()) return false;
        for (std::size_t i = 0; i < sites_.size(); ++i)
            if (arch.tokens[i] < 0 || arch.tokens[i] >= sites_[i].cardinality) return false;
        return true;
    }

    void validate(const Architecture& arch) const {
        if (arch.tokens.size() != sites_.size())
            throw InvalidArchitectureError("expected " + std::to_string(sites_.size()) + " tokens, got " +
                                           std::to_string(arch.tokens.size()));
        for (std::size_t i = 0; i < sites_.size(); ++i)
            if (arch.tokens[i] < 0 || arch.tokens[i] >= sites_[i].cardinality)
                throw InvalidArchitectureError("token " + std::to_string(arch.tokens[i]) + " at site " +
                                               std::to_string(i) + " outside [0, " +
                                               std::to_string(sites_[i].cardinality) + ")");
    }

    /// Mixed-radix rank of an architecture in enumeration order.
    std::uint64_t index_of(const Architecture& arch) const {
        validate(arch);
        std::uint64_t idx = 0;
        for (std::size_t i = 0; i < sites_.size(); ++i)
            idx = idx * static_cast<std::uint64_t>(sites_[i].cardinality) + static_cast<std::uint64_t>(arch.tokens[i]);
        return idx;
    }

    Architecture at(std::uint64_t index) const {
        Architecture a;
        a.tokens.assign(sites_.size(), 0);
        for (std::size_t i = sites_.size(); i-- > 0;) {
            const auto v = static_cast<std::uint64_t>(sites_[i].cardinality);
            a.tokens[i] = static_cast<int>(index % v);
            index /= v;
        }
        return a;
    }

    bool operator==(const SearchSpace& o) const { return sites_ == o.sites_; }

private:
    std::vector<Site> sites_;
    std::vector<std::size_t> offsets_;
    std::size_t encoding_width_ = 0;
    std::uint64_t total_ = 1;
    bool overflow_ = false;
};

using OneHotEncoding = std::vector<double>;

inline OneHotEncoding encode_one_hot(const SearchSpace& space, const Architecture& arch) {
    space.validate(arch);
    OneHotEncoding v(space.encoding_width(), 0.0);
    for (std::size_t i = 0; i < space.num_sites(); ++i)
        v[space.offset(i) + static_cast<std::size_t>(arch.tokens[i])] = 1.0;
    return v;
}

/// Argmax per site block.
inline Architecture decode_one_hot(const SearchSpace& space, std::span<const double> encoding) {
    if (encoding.size() != space.encoding_width())
        throw InvalidArchitectureError("encoding width " + std::to_string(encoding.size()) + " != " +
                                       std::to_string(space.encoding_width()));
    Architecture a;
    for (std::size_t i = 0; i < space.num_sites(); ++i) {
        const auto block = encoding.subspan(space.offset(i), static_cast<std::size_t>(space.cardinality(i)));
        int best = 0;
        for (std::size_t v = 1; v < block.size(); ++v)
            if (block[v] > block[static_cast<std::size_t>(best)]) best = static_cast<int>(v);
        a.tokens.push_back(best);
    }
    return a;
}

/// Lexicographic walk over every architecture of a space (site 0 most significant).
class Enumeration {
public:
    class iterator {
    public:
        using iterator_category = std::input_iterator_tag;
        using value_type = Architecture;
        using difference_type = std::ptrdiff_t;
        using pointer = const Architecture*;
        using reference = const Architecture&;

        iterator() = default;
        iterator(const SearchSpace* space, bool done) : space_(space), done_(done) {
            if (space_ && !done_) current_.tokens.assign(space_->num_sites(), 0);
        }

        reference operator*() const { return current_; }
        pointer operator->() const { return &current_; }

        iterator& operator++() {
            for (std::size_t i = space_->num_sites(); i-- > 0;) {
                if (++current_.tokens[i] < space_->cardinality(i)) return *this;
                current_.tokens[i] = 0;
            }
            done_ = true;
            return *this;
        }
        void operator++(int) { ++*this; }

        bool operator==(const iterator& o) const { return done_ == o.done_ && (done_ || current_ == o.current_); }

    private:
        const SearchSpace* space_ = nullptr;
        Architecture current_;
        bool done_ = true;
    };

    Enumeration(SearchSpace space, std::uint64_t cap) : space_(std::move(space)) {
        if (space_.overflowed() || space_.total_size() > cap)
            throw TooLargeError((space_.overflowed() ? std::string("overflowed") : std::to_string(space_.total_size())) +
                                " architectures exceeds cap " + std::to_string(cap));
    }

    iterator begin() const { return {&space_, false}; }
    iterator end() const { return {&space_, true}; }
    std::uint64_t size() const { return space_.total_size(); }

private:
    SearchSpace space_;  // owned so enumerating a temporary space is safe
};

inline Enumeration enumerate(const SearchSpace& space, std::uint64_t cap = kDefaultEnumerationCap) {
    return Enumeration(space, cap);
}

inline Architecture sample_architecture(const SearchSpace& space, Rng& rng) {
    Architecture a;
    a.tokens.reserve(space.num_sites());
    for (std::size_t i = 0; i < space.num_sites(); ++i)
        a.tokens.push_back(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(space.cardinality(i)))));
    return a;
}

inline std::vector<Architecture> sample_uniform(const SearchSpace& space, std::uint64_t seed, std::size_t n) {
    auto rng = make_rng(seed);
    std::vector<Architecture> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(sample_architecture(space, rng));
    return out;
}

inline std::string to_string(const Architecture& arch) {
    std::string s = "[";
    for (std::size_t i = 0; i < arch.tokens.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(arch.tokens[i]);
    }
    return s + "]";
}

}  // namespace paretogen

template <>
struct std::hash<paretogen::Architecture> {
    std::size_t operator()(const paretogen::Architecture& a) const noexcept {
        std::uint64_t h = 1469598103934665603ull;
        for (int t : a.tokens) {
            h ^= static_cast<std::uint64_t>(t) + 0x9e3779b97f4a7c15ull;
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};
