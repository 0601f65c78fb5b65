#include "s2seval/speechmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>

#include <fftw3.h>
#include <fmt/format.h>

#include "s2seval/parallel.hpp"

namespace s2seval::speech {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;
constexpr double kLogFloor = 1e-10;

std::uint16_t read_u16(std::span<const unsigned char> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const unsigned char> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>((v >> (8 * k)) & 0xFF));
}

bool tag_is(std::span<const unsigned char> b, std::size_t at, const char* tag) {
    return std::memcmp(b.data() + at, tag, 4) == 0;
}

// FFTW planning is not thread-safe; execution on fresh arrays is. Plans are
// cached per size and created under a lock.
class RealFft {
public:
    static const RealFft& for_size(std::size_t n) {
        static std::mutex mutex;
        static std::map<std::size_t, std::unique_ptr<RealFft>> cache;
        std::lock_guard lock(mutex);
        auto& slot = cache[n];
        if (!slot) slot.reset(new RealFft(n));
        return *slot;
    }

    ~RealFft() { fftw_destroy_plan(plan_); }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    // Power spectrum |X_k|^2 for k = 0..n/2.
    std::vector<double> power(std::span<const double> frame) const {
        auto* in = static_cast<double*>(fftw_malloc(sizeof(double) * n_));
        auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n_ / 2 + 1)));
        std::copy(frame.begin(), frame.end(), in);
        fftw_execute_dft_r2c(plan_, in, out);
        std::vector<double> p(n_ / 2 + 1);
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
        fftw_free(in);
        fftw_free(out);
        return p;
    }

private:
    explicit RealFft(std::size_t n) : n_(n) {
        auto* in = static_cast<double*>(fftw_malloc(sizeof(double) * n));
        auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
    }

    std::size_t n_;
    fftw_plan plan_ = nullptr;
};

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// mel_bands x (n_fft/2 + 1) triangular weights, band edges equally spaced on
// the HTK mel scale between 0 Hz and Nyquist.
std::vector<std::vector<double>> mel_filterbank(std::size_t mel_bands, std::size_t n_fft, int sample_rate) {
    const double nyquist = sample_rate / 2.0;
    const double mel_max = hz_to_mel(nyquist);
    std::vector<double> edges(mel_bands + 2);
    for (std::size_t m = 0; m < edges.size(); ++m) {
        edges[m] = mel_to_hz(mel_max * static_cast<double>(m) / static_cast<double>(mel_bands + 1));
    }
    const std::size_t bins = n_fft / 2 + 1;
    std::vector<std::vector<double>> bank(mel_bands, std::vector<double>(bins, 0.0));
    for (std::size_t m = 0; m < mel_bands; ++m) {
        const double lo = edges[m];
        const double mid = edges[m + 1];
        const double hi = edges[m + 2];
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
            double w = 0.0;
            if (f > lo && f <= mid) {
                w = (f - lo) / (mid - lo);
            } else if (f > mid && f < hi) {
                w = (hi - f) / (hi - mid);
            }
            bank[m][k] = w;
        }
    }
    return bank;
}

// Rows 0..keep-1 of the orthonormal DCT-II matrix of size n.
std::vector<std::vector<double>> dct_matrix(std::size_t keep, std::size_t n) {
    std::vector<std::vector<double>> d(keep, std::vector<double>(n));
    const double nn = static_cast<double>(n);
    for (std::size_t k = 0; k < keep; ++k) {
        const double scale = k == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
        for (std::size_t i = 0; i < n; ++i) {
            d[k][i] = scale * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(i) + 0.5) / nn);
        }
    }
    return d;
}

std::vector<double> hann(std::size_t n) {
    // Periodic Hann, the usual choice for spectral analysis.
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

} // namespace

AudioBuffer parse_wav(std::span<const unsigned char> bytes, int expected_rate) {
    if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
        throw ValidationError("not a RIFF/WAVE file");
    }
    std::optional<std::uint16_t> format;
    std::uint16_t channels = 0;
    std::uint32_t rate = 0;
    std::uint16_t bits = 0;
    std::span<const unsigned char> data;
    bool have_data = false;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t size = read_u32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        const std::size_t available = std::min<std::size_t>(size, bytes.size() - body);
        if (tag_is(bytes, pos, "fmt ")) {
            if (available < 16) throw ValidationError("truncated fmt chunk");
            format = read_u16(bytes, body);
            channels = read_u16(bytes, body + 2);
            rate = read_u32(bytes, body + 4);
            bits = read_u16(bytes, body + 14);
            if (*format == kFormatExtensible) {
                if (available < 26) throw ValidationError("truncated extensible fmt chunk");
                format = read_u16(bytes, body + 24);
            }
        } else if (tag_is(bytes, pos, "data")) {
            data = bytes.subspan(body, available);
            have_data = true;
        }
        pos = body + size + (size & 1);
    }
    if (!format) throw ValidationError("WAV file has no fmt chunk");
    if (!have_data) throw ValidationError("WAV file has no data chunk");
    if (channels != 1 && channels != 2) throw ValidationError(fmt::format("unsupported channel count {}", channels));
    const bool pcm16 = *format == kFormatPcm && bits == 16;
    const bool float32 = *format == kFormatFloat && bits == 32;
    if (!pcm16 && !float32) {
        throw ValidationError(fmt::format("unsupported WAV encoding (format {}, {} bits)", *format, bits));
    }
    if (rate == 0) throw ValidationError("WAV sample rate is zero");
    if (expected_rate != 0 && static_cast<int>(rate) != expected_rate) {
        throw ValidationError(fmt::format("sample rate mismatch: file is {} Hz, configured {} Hz", rate, expected_rate));
    }

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t frames = data.size() / frame_bytes;
    if (frames == 0) throw ValidationError("WAV file has no samples");

    AudioBuffer out;
    out.sample_rate = static_cast<int>(rate);
    out.samples.resize(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t at = t * frame_bytes + c * bytes_per_sample;
            if (pcm16) {
                const auto v = static_cast<std::int16_t>(read_u16(data, at));
                acc += static_cast<double>(v) / 32768.0;
            } else {
                const std::uint32_t raw = read_u32(data, at);
                float f = 0.0F;
                std::memcpy(&f, &raw, sizeof f);
                acc += static_cast<double>(f);
            }
        }
        out.samples[t] = acc / static_cast<double>(channels);
    }
    return out;
}

AudioBuffer load_audio(const std::filesystem::path& path, int expected_rate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ComputationError(fmt::format("cannot open audio file '{}'", path.string()));
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_wav(bytes, expected_rate);
    } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::vector<unsigned char> encode_wav(const AudioBuffer& audio) {
    if (audio.sample_rate <= 0) throw ValidationError("sample rate must be positive");
    const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
    std::vector<unsigned char> out;
    out.reserve(44 + data_bytes);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(out, 16);
    put_u16(out, kFormatPcm);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(audio.sample_rate) * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(out, data_bytes);
    for (double s : audio.samples) {
        const double clipped = std::clamp(s, -1.0, 1.0);
        const auto v = static_cast<std::int16_t>(std::lround(std::clamp(clipped * 32768.0, -32768.0, 32767.0)));
        put_u16(out, static_cast<std::uint16_t>(v));
    }
    return out;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
    const auto bytes = encode_wav(audio);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ComputationError(fmt::format("cannot write '{}'", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

AudioBuffer preemphasize(const AudioBuffer& buffer, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("pre-emphasis must lie in [0, 1)");
    AudioBuffer out{std::vector<double>(buffer.samples.size()), buffer.sample_rate};
    for (std::size_t t = 0; t < buffer.samples.size(); ++t) {
        out.samples[t] = t == 0 ? buffer.samples[0] : buffer.samples[t] - alpha * buffer.samples[t - 1];
    }
    return out;
}

void SpectralConfig::validate() const {
    if (sample_rate <= 0) throw ValidationError("sample_rate must be positive");
    if (!(pre_emphasis >= 0.0 && pre_emphasis < 1.0)) throw ValidationError("pre_emphasis must lie in [0, 1)");
    if (!(frame_shift > 0.0)) throw ValidationError("frame_shift must be positive");
    if (shift_samples() == 0) throw ValidationError("frame_shift is shorter than one sample");
    if (frame_length < 2) throw ValidationError("frame_length must be at least 2 samples");
    if (mel_bands == 0) throw ValidationError("mel_bands must be positive");
    if (cepstral_order == 0 || cepstral_order >= mel_bands) {
        throw ValidationError("cepstral_order must be positive and smaller than mel_bands");
    }
}

std::size_t SpectralConfig::shift_samples() const {
    return static_cast<std::size_t>(std::lround(frame_shift * sample_rate));
}

MelCepstrum::MelCepstrum(std::size_t num_frames, std::size_t num_coeffs)
    : values_(num_frames * num_coeffs, 0.0), num_coeffs_(num_coeffs) {}

MelCepstrum::MelCepstrum(std::vector<double> values, std::size_t num_coeffs)
    : values_(std::move(values)), num_coeffs_(num_coeffs) {
    if (num_coeffs_ == 0 || values_.size() % num_coeffs_ != 0) {
        throw ValidationError("cepstrum values do not form whole frames");
    }
}

MelCepstrum mel_cepstrum(const AudioBuffer& buffer, const SpectralConfig& config) {
    config.validate();
    if (buffer.sample_rate != config.sample_rate) {
        throw ValidationError(fmt::format("sample rate mismatch: audio is {} Hz, configured {} Hz",
                                          buffer.sample_rate, config.sample_rate));
    }
    if (buffer.samples.size() < config.frame_length) {
        throw ValidationError(fmt::format("audio has {} samples, shorter than one {}-sample frame",
                                          buffer.samples.size(), config.frame_length));
    }
    const AudioBuffer emphasized = preemphasize(buffer, config.pre_emphasis);
    const std::size_t shift = config.shift_samples();
    const std::size_t frames = (buffer.samples.size() - config.frame_length) / shift + 1;
    const std::size_t coeffs = config.cepstral_order + 1;

    const auto window = hann(config.frame_length);
    const auto bank = mel_filterbank(config.mel_bands, config.frame_length, config.sample_rate);
    const auto dct = dct_matrix(coeffs, config.mel_bands);
    const auto& fft = RealFft::for_size(config.frame_length);

    MelCepstrum out(frames, coeffs);
    std::vector<double> frame(config.frame_length);
    std::vector<double> log_mel(config.mel_bands);
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t start = t * shift;
        for (std::size_t i = 0; i < config.frame_length; ++i) frame[i] = emphasized.samples[start + i] * window[i];
        const auto power = fft.power(frame);
        for (std::size_t m = 0; m < config.mel_bands; ++m) {
            double e = 0.0;
            for (std::size_t k = 0; k < power.size(); ++k) e += bank[m][k] * power[k];
            log_mel[m] = std::log(std::max(e, kLogFloor));
        }
        auto row = out.frame(t);
        for (std::size_t k = 0; k < coeffs; ++k) {
            double c = 0.0;
            for (std::size_t m = 0; m < config.mel_bands; ++m) c += dct[k][m] * log_mel[m];
            row[k] = c;
        }
    }
    return out;
}

double cepstral_distance(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t d = 1; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        sum += diff * diff;
    }
    return std::sqrt(sum);
}

DtwPath dtw_align(const MelCepstrum& a, const MelCepstrum& b) {
    const std::size_t n = a.num_frames();
    const std::size_t m = b.num_frames();
    if (n == 0 || m == 0) throw ValidationError("DTW needs two non-empty sequences");
    if (a.num_coeffs() != b.num_coeffs()) {
        throw ValidationError(fmt::format("cepstral order mismatch: {} vs {}", a.cepstral_order(), b.cepstral_order()));
    }

    // 0 = diagonal, 1 = from (i-1, j), 2 = from (i, j-1).
    std::vector<double> cost(n * m);
    std::vector<unsigned char> step(n * m, 0);
    const auto at = [m](std::size_t i, std::size_t j) { return i * m + j; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double d = cepstral_distance(a.frame(i), b.frame(j));
            if (i == 0 && j == 0) {
                cost[0] = d;
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            unsigned char from = 0;
            if (i > 0 && j > 0) best = cost[at(i - 1, j - 1)];
            if (i > 0 && cost[at(i - 1, j)] < best) {
                best = cost[at(i - 1, j)];
                from = 1;
            }
            if (j > 0 && cost[at(i, j - 1)] < best) {
                best = cost[at(i, j - 1)];
                from = 2;
            }
            cost[at(i, j)] = d + best;
            step[at(i, j)] = from;
        }
    }

    DtwPath path;
    path.total_cost = cost[at(n - 1, m - 1)];
    std::size_t i = n - 1;
    std::size_t j = m - 1;
    path.pairs.emplace_back(i, j);
    while (i > 0 || j > 0) {
        switch (step[at(i, j)]) {
        case 0: --i; --j; break;
        case 1: --i; break;
        default: --j; break;
        }
        path.pairs.emplace_back(i, j);
    }
    std::reverse(path.pairs.begin(), path.pairs.end());
    return path;
}

McdResult mcd(const MelCepstrum& hyp, const MelCepstrum& ref) {
    if (hyp.num_coeffs() != ref.num_coeffs()) {
        throw ValidationError(
            fmt::format("cepstral order mismatch: {} vs {}", hyp.cepstral_order(), ref.cepstral_order()));
    }
    const DtwPath path = dtw_align(hyp, ref);
    McdResult out;
    out.path_length = path.pairs.size();
    out.per_pair_db.reserve(path.pairs.size());
    double sum = 0.0;
    for (const auto& [i, j] : path.pairs) {
        const double d = kMcdScale * cepstral_distance(hyp.frame(i), ref.frame(j));
        out.per_pair_db.push_back(d);
        sum += d;
    }
    out.mcd_db = sum / static_cast<double>(out.path_length);
    return out;
}

CorpusMcd corpus_mcd(const EvalCorpus& corpus, const SpectralConfig& config, unsigned jobs) {
    config.validate();
    corpus.require({.mcd = true});

    struct Slot {
        SegmentMcd result;
        std::string error;
    };
    std::vector<Slot> slots(corpus.size());
    parallel_for(corpus.size(), jobs, [&](std::size_t i) {
        const auto& seg = corpus[i];
        auto& slot = slots[i];
        slot.result.id = seg.id;
        try {
            const auto hyp = mel_cepstrum(load_audio(*seg.hypothesis_audio, config.sample_rate), config);
            const auto ref = mel_cepstrum(load_audio(*seg.reference_audio, config.sample_rate), config);
            const auto result = mcd(hyp, ref);
            slot.result.mcd_db = result.mcd_db;
            slot.result.frames_hyp = hyp.num_frames();
            slot.result.frames_ref = ref.num_frames();
            slot.result.path_length = result.path_length;
        } catch (const std::exception& e) {
            slot.error = e.what();
        }
    });

    std::string errors;
    for (const auto& slot : slots) {
        if (!slot.error.empty()) errors += fmt::format("\n  segment '{}': {}", slot.result.id, slot.error);
    }
    if (!errors.empty()) throw ComputationError("MCD failed for some segments:" + errors);

    CorpusMcd out;
    std::vector<double> values;
    for (auto& slot : slots) {
        values.push_back(slot.result.mcd_db);
        out.segments.push_back(std::move(slot.result));
    }
    // Summed in sorted order so the mean is independent of segment order.
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    return out;
}

} // namespace s2seval::speech
