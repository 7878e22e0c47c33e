#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace pclvd {

using VarId = std::uint32_t;

/// Variable scope stored as a bitmask over 64-bit words. Scopes built over
/// different universes compare as if the shorter one were zero-padded.
class Scope {
public:
    Scope() = default;
    explicit Scope(std::size_t universe);
    Scope(std::size_t universe, std::initializer_list<VarId> vars);

    static Scope from_indices(std::size_t universe, const std::vector<VarId>& vars);
    static Scope range(std::size_t universe, VarId first, VarId last);  // [first, last)

    std::size_t universe() const noexcept { return universe_; }
    void resize(std::size_t universe);

    void insert(VarId v);
    void erase(VarId v);
    bool contains(VarId v) const noexcept;
    std::size_t count() const noexcept;
    bool empty() const noexcept;

    bool is_subset_of(const Scope& other) const noexcept;
    bool is_disjoint_from(const Scope& other) const noexcept;
    bool operator==(const Scope& other) const noexcept;

    Scope& operator|=(const Scope& other);
    Scope& operator&=(const Scope& other);
    Scope& operator-=(const Scope& other);
    friend Scope operator|(Scope a, const Scope& b) { return a |= b; }
    friend Scope operator&(Scope a, const Scope& b) { return a &= b; }
    friend Scope operator-(Scope a, const Scope& b) { return a -= b; }

    std::vector<VarId> indices() const;
    std::string to_string() const;

private:
    std::size_t universe_ = 0;
    std::vector<std::uint64_t> words_;
};

} // namespace pclvd
