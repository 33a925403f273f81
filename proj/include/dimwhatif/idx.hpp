#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dimwhatif/dataset.hpp"

namespace dimwhatif {

// Reader for the big-endian idx format used by image digit corpora.
namespace idx {

inline constexpr std::uint32_t kImagesMagic = 0x00000803;
inline constexpr std::uint32_t kLabelsMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(std::string_view bytes, std::size_t offset) {
    require(offset + 4 <= bytes.size(), "malformed_idx", "idx header truncated");
    const auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])); };
    return (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
}

}  // namespace detail

// Images as a dataset: one row per image ("img<k>"), one feature per pixel
// ("px<k>", row-major), intensities scaled to [0, 1]. `limit` caps the row
// count (0 = all).
inline Dataset read_images(std::string_view bytes, std::size_t limit = 0) {
    require(detail::read_be32(bytes, 0) == kImagesMagic, "malformed_idx", "not an idx image file (bad magic)");
    const std::size_t count = detail::read_be32(bytes, 4);
    const std::size_t rows = detail::read_be32(bytes, 8);
    const std::size_t cols = detail::read_be32(bytes, 12);
    const std::size_t pixels = rows * cols;
    const std::size_t n = limit == 0 ? count : std::min(count, limit);
    require(16 + n * pixels <= bytes.size(), "malformed_idx", "idx image payload truncated");

    std::vector<std::string> ids;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("img" + std::to_string(i));
    for (std::size_t p = 0; p < pixels; ++p) names.push_back("px" + std::to_string(p));
    Matrix values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < pixels; ++p) {
            values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
                static_cast<unsigned char>(bytes[16 + i * pixels + p]) / 255.0;
        }
    }
    return Dataset(std::move(ids), std::move(names), std::move(values));
}

inline std::vector<std::uint8_t> read_labels(std::string_view bytes, std::size_t limit = 0) {
    require(detail::read_be32(bytes, 0) == kLabelsMagic, "malformed_idx", "not an idx label file (bad magic)");
    const std::size_t count = detail::read_be32(bytes, 4);
    const std::size_t n = limit == 0 ? count : std::min(count, limit);
    require(8 + n <= bytes.size(), "malformed_idx", "idx label payload truncated");
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint8_t>(bytes[8 + i]);
    return labels;
}

}  // namespace idx
}  // namespace dimwhatif
