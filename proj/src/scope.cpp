#include "pclvd/scope.hpp"

#include <algorithm>
#include <bit>

#include "pclvd/error.hpp"

namespace pclvd {

namespace {
constexpr std::size_t kWordBits = 64;

std::size_t words_for(std::size_t universe) { return (universe + kWordBits - 1) / kWordBits; }
} // namespace

Scope::Scope(std::size_t universe) : universe_(universe), words_(words_for(universe), 0) {}

Scope::Scope(std::size_t universe, std::initializer_list<VarId> vars) : Scope(universe) {
    for (VarId v : vars) insert(v);
}

Scope Scope::from_indices(std::size_t universe, const std::vector<VarId>& vars) {
    Scope s(universe);
    for (VarId v : vars) s.insert(v);
    return s;
}

Scope Scope::range(std::size_t universe, VarId first, VarId last) {
    Scope s(universe);
    for (VarId v = first; v < last; ++v) s.insert(v);
    return s;
}

void Scope::resize(std::size_t universe) {
    if (universe < universe_) {
        for (VarId v = static_cast<VarId>(universe); v < universe_; ++v) {
            if (contains(v)) throw DomainError("Scope::resize would drop variable " + std::to_string(v));
        }
    }
    universe_ = universe;
    words_.resize(words_for(universe), 0);
}

void Scope::insert(VarId v) {
    if (v >= universe_) throw DomainError("variable " + std::to_string(v) + " outside scope universe");
    words_[v / kWordBits] |= std::uint64_t{1} << (v % kWordBits);
}

void Scope::erase(VarId v) {
    if (v < universe_) words_[v / kWordBits] &= ~(std::uint64_t{1} << (v % kWordBits));
}

bool Scope::contains(VarId v) const noexcept {
    if (v >= universe_) return false;
    return (words_[v / kWordBits] >> (v % kWordBits)) & 1U;
}

std::size_t Scope::count() const noexcept {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

bool Scope::empty() const noexcept {
    return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
}

bool Scope::is_subset_of(const Scope& other) const noexcept {
    for (std::size_t i = 0; i < words_.size(); ++i) {
        const std::uint64_t o = i < other.words_.size() ? other.words_[i] : 0;
        if (words_[i] & ~o) return false;
    }
    return true;
}

bool Scope::is_disjoint_from(const Scope& other) const noexcept {
    const std::size_t n = std::min(words_.size(), other.words_.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (words_[i] & other.words_[i]) return false;
    }
    return true;
}

bool Scope::operator==(const Scope& other) const noexcept {
    const std::size_t n = std::max(words_.size(), other.words_.size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t a = i < words_.size() ? words_[i] : 0;
        const std::uint64_t b = i < other.words_.size() ? other.words_[i] : 0;
        if (a != b) return false;
    }
    return true;
}

Scope& Scope::operator|=(const Scope& other) {
    if (other.universe_ > universe_) resize(other.universe_);
    for (std::size_t i = 0; i < other.words_.size(); ++i) words_[i] |= other.words_[i];
    return *this;
}

Scope& Scope::operator&=(const Scope& other) {
    for (std::size_t i = 0; i < words_.size(); ++i) {
        words_[i] &= i < other.words_.size() ? other.words_[i] : 0;
    }
    return *this;
}

Scope& Scope::operator-=(const Scope& other) {
    const std::size_t n = std::min(words_.size(), other.words_.size());
    for (std::size_t i = 0; i < n; ++i) words_[i] &= ~other.words_[i];
    return *this;
}

std::vector<VarId> Scope::indices() const {
    std::vector<VarId> out;
    out.reserve(count());
    for (std::size_t w = 0; w < words_.size(); ++w) {
        std::uint64_t bits = words_[w];
        while (bits) {
            const int b = std::countr_zero(bits);
            out.push_back(static_cast<VarId>(w * kWordBits + static_cast<std::size_t>(b)));
            bits &= bits - 1;
        }
    }
    return out;
}

std::string Scope::to_string() const {
    std::string s = "{";
    bool first = true;
    for (VarId v : indices()) {
        if (!first) s += ",";
        s += std::to_string(v);
        first = false;
    }
    return s + "}";
}

} // namespace pclvd
