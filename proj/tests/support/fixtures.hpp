#pragma once

// Shared test fixtures: synthetic images, articles and on-disk datasets.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "imfnd/datasets.hpp"
#include "imfnd/rng.hpp"

namespace imfnd::testing {

// Binary PPM (P6) with seeded pixel noise.
inline std::vector<unsigned char> make_ppm(std::size_t width, std::size_t height,
                                           std::uint64_t seed) {
    std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    std::vector<unsigned char> bytes(header.begin(), header.end());
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < width * height * 3; ++i) {
        bytes.push_back(static_cast<unsigned char>(rng.next() & 0xFF));
    }
    return bytes;
}

inline std::filesystem::path make_temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("imfnd-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                      std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string article_text(std::size_t index, Label label) {
    // Deliberately avoids the words "real" and "fake" so verdict parsing in
    // mock responses is never confused by article bodies.
    std::string text = "Fixture article number " + std::to_string(index) +
                       " about the city council budget vote";
    text += label == Label::REAL ? " with verified sourcing" : " with disputed sourcing";
    return text;
}

struct FixtureDataset {
    std::filesystem::path dir;
    std::filesystem::path jsonl;
    std::size_t n_real = 0;
    std::size_t n_fake = 0;
};

// Writes a preprocessed-style dataset: one image per article, images on disk.
inline FixtureDataset write_fixture_dataset(const std::string& tag, std::size_t n_real,
                                            std::size_t n_fake, std::uint64_t seed = 7) {
    FixtureDataset fixture;
    fixture.dir = make_temp_dir(tag);
    fixture.jsonl = fixture.dir / "dataset.jsonl";
    fixture.n_real = n_real;
    fixture.n_fake = n_fake;
    std::filesystem::create_directories(fixture.dir / "images");

    std::ofstream out(fixture.jsonl);
    std::size_t index = 0;
    auto emit = [&](Label label) {
        const std::string id =
            (label == Label::REAL ? std::string("real-") : std::string("fake-")) +
            std::to_string(index);
        const std::string image_rel = "images/" + id + ".ppm";
        const auto image = make_ppm(8, 8, seed + index * 1315423911ULL);
        std::ofstream img(fixture.dir / image_rel, std::ios::binary);
        img.write(reinterpret_cast<const char*>(image.data()),
                  static_cast<std::streamsize>(image.size()));
        out << nlohmann::json{{"id", id},
                              {"text", article_text(index, label)},
                              {"image_paths", {image_rel}},
                              {"label", static_cast<int>(label)},
                              {"language", "en"}}
                   .dump()
            << "\n";
        ++index;
    };
    for (std::size_t i = 0; i < n_real; ++i) emit(Label::REAL);
    for (std::size_t i = 0; i < n_fake; ++i) emit(Label::FAKE);
    return fixture;
}

}  // namespace imfnd::testing
