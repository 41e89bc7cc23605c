#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace kbwalk {

/// Dense integer handle into one of the index tables. The tag keeps
/// sentence, concept and group handles from being mixed up.
template <typename Tag>
struct Id {
  std::uint32_t value = 0;

  constexpr auto operator<=>(const Id&) const = default;
};

using SentenceId = Id<struct SentenceTag>;
using ConceptId = Id<struct ConceptTag>;
using GroupId = Id<struct GroupTag>;

template <typename Tag>
std::string to_string(Id<Tag> id) {
  return std::to_string(id.value);
}

}  // namespace kbwalk

template <typename Tag>
struct std::hash<kbwalk::Id<Tag>> {
  std::size_t operator()(kbwalk::Id<Tag> id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
