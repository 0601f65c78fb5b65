#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2seval/corpus.hpp"

namespace s2seval::speech {

struct AudioBuffer {
    std::vector<double> samples;  // mono, in [-1, 1]
    int sample_rate = 0;
};

// Reads a PCM WAV file (16-bit integer or 32-bit float, mono or stereo).
// Stereo is averaged to mono. When `expected_rate` is nonzero a different
// file rate is an error; nothing is resampled.
AudioBuffer load_audio(const std::filesystem::path& path, int expected_rate = 0);
AudioBuffer parse_wav(std::span<const unsigned char> bytes, int expected_rate = 0);

// Writes mono 16-bit PCM. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);
std::vector<unsigned char> encode_wav(const AudioBuffer& audio);

// y[0] = x[0], y[t] = x[t] - alpha * x[t-1].
AudioBuffer preemphasize(const AudioBuffer& buffer, double alpha);

enum class Window { Hann };

struct SpectralConfig {
    int sample_rate = 22050;
    double pre_emphasis = 0.97;
    double frame_shift = 0.0125;  // seconds
    std::size_t frame_length = 1024;  // samples, also the FFT size
    Window window = Window::Hann;
    std::size_t mel_bands = 80;
    std::size_t cepstral_order = 34;

    // Throws ValidationError on an inconsistent configuration.
    void validate() const;
    std::size_t shift_samples() const;
};

// Row-major (num_frames x (cepstral_order + 1)); column 0 is the energy-like c0.
class MelCepstrum {
public:
    MelCepstrum() = default;
    MelCepstrum(std::size_t num_frames, std::size_t num_coeffs);
    MelCepstrum(std::vector<double> values, std::size_t num_coeffs);

    std::size_t num_frames() const { return num_coeffs_ ? values_.size() / num_coeffs_ : 0; }
    std::size_t num_coeffs() const { return num_coeffs_; }
    std::size_t cepstral_order() const { return num_coeffs_ ? num_coeffs_ - 1 : 0; }

    std::span<const double> frame(std::size_t t) const { return {values_.data() + t * num_coeffs_, num_coeffs_}; }
    std::span<double> frame(std::size_t t) { return {values_.data() + t * num_coeffs_, num_coeffs_}; }
    const std::vector<double>& values() const { return values_; }

    friend bool operator==(const MelCepstrum&, const MelCepstrum&) = default;

private:
    std::vector<double> values_;
    std::size_t num_coeffs_ = 0;
};

// Pre-emphasis, then per frame: Hann window, power spectrum, triangular mel
// filterbank (0 Hz to Nyquist), log floored at 1e-10, orthonormal DCT-II,
// keeping coefficients 0..cepstral_order. Frame t covers
// [t * shift, t * shift + frame_length).
//
// This is a log-mel cepstrum, not SPTK's iterative mel-generalized cepstrum;
// absolute MCD values are therefore not comparable with SPTK-based numbers.
MelCepstrum mel_cepstrum(const AudioBuffer& buffer, const SpectralConfig& config = {});

struct DtwPath {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    double total_cost = 0.0;
};

// Euclidean distance between two frames over coefficients 1..order (c0 excluded).
double cepstral_distance(std::span<const double> a, std::span<const double> b);

// Minimum-cost monotone alignment with steps (1,0), (0,1), (1,1). Ties are
// resolved in favour of the diagonal step, then (1,0).
DtwPath dtw_align(const MelCepstrum& a, const MelCepstrum& b);

// 10 * sqrt(2) / ln(10): converts cepstral Euclidean distance to dB.
inline constexpr double kMcdScale = 6.141851463713754;

struct McdResult {
    double mcd_db = 0.0;
    std::size_t path_length = 0;
    std::vector<double> per_pair_db;
};

McdResult mcd(const MelCepstrum& hyp, const MelCepstrum& ref);

struct SegmentMcd {
    std::string id;
    double mcd_db = 0.0;
    std::size_t frames_hyp = 0;
    std::size_t frames_ref = 0;
    std::size_t path_length = 0;
};

struct CorpusMcd {
    double mean = 0.0;
    std::vector<SegmentMcd> segments;  // corpus order
};

// Unweighted mean of per-segment MCD. Segments are processed on up to `jobs`
// threads; the result does not depend on the job count. Audio failures are
// collected and reported together as a ComputationError.
CorpusMcd corpus_mcd(const EvalCorpus& corpus, const SpectralConfig& config = {}, unsigned jobs = 1);

} // namespace s2seval::speech
