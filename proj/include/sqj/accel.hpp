#pragma once

// Functional model of the SqueezeJet-2 convolution engine.
//
// The model keeps the hardware's on-chip structures explicit:
//   weights[PAR_FACT][Q_CHOxKxKxCHI_MAX], bias[PAR_FACT][Q_CHO_MAX]
//   linebuf[K_MAX][WIxCHI_MAX] addressed through the rotating linebuf_idx
//   two line-buffer windows and two output-pixel buffers (double buffering)
// and walks the same row / pixel schedule: per output row a line-buffer
// shift and a window init, then per output pixel the concurrent trio
// pixel_calc / update_linebuf_win / write_back on alternating buffers, then
// a leftover write-back. Output is bit-identical to ref::conv.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqj/fxp.hpp"
#include "sqj/network.hpp"
#include "sqj/tensor.hpp"

namespace sqj {

/// Hardware design point.
struct AccelConfig {
    int par_fact = 16;   // PEs
    int chi_num = 16;    // MACs per PE per cycle
    int k_max = 3;
    int wi_x_chi_max = 8192;
    int kxkxchi_max = 1024;
    int q_choxkxkxchi_max = 16384;
    int q_cho_max = 64;
    int cho_max = 1024;
    double dsp_share = 0.5;  // fraction of MACs mapped to DSP blocks

    int macs() const { return par_fact * chi_num; }
    void validate() const;

    friend bool operator==(const AccelConfig&, const AccelConfig&) = default;
};

class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr int ceil_div(int a, int b) { return (a + b - 1) / b; }

/// One accelerator call: geometry, formats and flags.
struct ConvInvocation {
    ConvSpec spec;           // fused_pool empty => pool bypassed
    FxpFormat in_fmt;        // ei
    FxpFormat out_fmt;       // eo
    FxpFormat w_fmt;         // ep
    FxpFormat b_fmt;

    int padded_width() const { return spec.w_in + 2 * spec.pad; }
    int padded_height() const { return spec.h_in + 2 * spec.pad; }
    int wi_x_chi() const { return padded_width() * spec.ch_in; }
    int kx_chi() const { return spec.kernel * spec.ch_in; }
    int sx_chi() const { return spec.stride * spec.ch_in; }
    int pad_x_chi() const { return spec.pad * spec.ch_in; }
    int kxkxchi() const { return spec.kernel * spec.kernel * spec.ch_in; }
    int q_cho(int par_fact) const { return ceil_div(spec.ch_out, par_fact); }
    int acc_frac() const { return in_fmt.frac_len + w_fmt.frac_len; }
    bool pool_bypassed() const { return !spec.fused_pool.has_value(); }
};

ConvInvocation make_invocation(const ConvSpec& spec, const QBlob& blob, FxpFormat in_fmt,
                               FxpFormat out_fmt);

/// Human-readable list of violated cache bounds; empty when the call fits.
std::vector<std::string> capacity_violations(const ConvInvocation& inv, const AccelConfig& cfg);
void check_capacity(const ConvInvocation& inv, const AccelConfig& cfg);

/// Weights split round-robin over PEs: bank p holds output channels
/// co = q * par_fact + p for q in [0, q_cho), each as a contiguous KxKxCHI run.
/// Slots past CHO are zero.
struct WeightBanks {
    int par_fact = 0;
    int q_cho = 0;
    int kxkxchi = 0;
    int ch_out = 0;
    std::vector<std::vector<std::int8_t>> weights;  // [par_fact][q_cho * kxkxchi]
    std::vector<std::vector<std::int8_t>> bias;     // [par_fact][q_cho]

    int channel(int pe, int q) const { return q * par_fact + pe; }
};

WeightBanks partition_weights(const QBlob& blob, const AccelConfig& cfg);

/// Physical line-buffer storage plus the rotation index. Logical row r lives
/// in physical row order()[r].
class LineBuffer {
public:
    LineBuffer(int k_max, int width_max);

    /// Activates k logical rows with identity order.
    void reset(int k);
    /// Oldest rows recycle to the back: rotate-left by n.
    void rotate(int n);

    int rows() const { return k_; }
    std::span<const int> order() const { return std::span<const int>(order_).first(k_); }
    std::span<std::int8_t> row(int logical);
    std::span<const std::int8_t> row(int logical) const;

private:
    int k_max_;
    int width_max_;
    int k_ = 0;
    std::vector<std::int8_t> lines_;
    std::vector<int> order_;
};

/// Which padded input rows each output row loads. Shared by the functional
/// model and the event simulator so both walk the same schedule.
struct RowLoad {
    int skipped_real_rows = 0;     // streamed and discarded (stride > kernel)
    std::vector<int> full_rows;    // padded rows loaded whole by shift_linebuf
    int incremental_row = 0;       // padded row primed with K pixels, then S per pixel
    int rotate_by = 0;
};

RowLoad plan_row_load(const ConvInvocation& inv, int ho);
/// Real input rows below the last window, drained after the row loop.
int trailing_real_rows(const ConvInvocation& inv);
bool is_real_row(const ConvInvocation& inv, int padded_row);

struct AccelStats {
    std::int64_t input_reads = 0;       // codes pulled from the input stream
    std::int64_t input_discards = 0;    // of those, codes never stored
    std::int64_t padding_codes = 0;     // zero codes synthesized for padding
    std::int64_t output_writes = 0;     // codes written to the output
    std::int64_t pixel_calcs = 0;
    std::int64_t macs = 0;
    std::int64_t update_calls = 0;
    std::int64_t parity_violations = 0;
    std::vector<int> rows_loaded;       // new line-buffer rows per output row
    std::vector<int> update_codes;      // stream codes consumed per update call
    std::vector<int> write_coverage;    // per conv output pixel
};

/// Sequential reader over a feature map's HWC payload (the fmap_in / iidx pair).
class InputStream {
public:
    explicit InputStream(std::span<const std::int8_t> data) : data_(data) {}
    std::int8_t read();
    void discard(std::size_t n);
    std::size_t position() const { return next_; }
    bool exhausted() const { return next_ == data_.size(); }
    std::int64_t discarded() const { return discarded_; }

private:
    std::span<const std::int8_t> data_;
    std::size_t next_ = 0;
    std::int64_t discarded_ = 0;
};

/// Row-synchronous max-pool consumer with its own pool-height line buffer.
class PoolUnit {
public:
    PoolUnit(Shape in, PoolSpec pool);
    /// Accepts input row r (rows arrive in order) and emits finished rows.
    void push_row(int r, std::span<const std::int8_t> row);
    const QMap& result() const { return out_; }
    QMap take() { return std::move(out_); }

private:
    int last_needed_row(int ph) const;

    Shape in_;
    PoolSpec pool_;
    Shape out_shape_;
    std::vector<std::vector<std::int8_t>> ring_;
    int next_out_row_ = 0;
    QMap out_;
};

/// One invocation's caches and the schedule stages. The stage methods are
/// public so tests can drive them one at a time.
class ConvEngine {
public:
    explicit ConvEngine(const AccelConfig& cfg);

    /// Full L_H_OUT / L_W_OUT schedule; pools the rows on the fly when the
    /// invocation carries a fused pool.
    QMap run(const ConvInvocation& inv, const QMap& in, const WeightBanks& banks,
             AccelStats* stats = nullptr);

    void load(const ConvInvocation& inv, const WeightBanks& banks);

    void shift_linebuf(InputStream& in, int ho);
    void init_linebuf_win(int win);
    void update_linebuf_win(InputStream& in, int win, int& pixel_iwp, int wo);
    void pixel_calc(int win, int out_pix);
    /// Emits out_pix for column wo-1 of the current row; no-op at wo == 0.
    void write_back(int out_pix, int wo);

    const LineBuffer& linebuf() const { return linebuf_; }
    std::span<const std::int8_t> window(int win) const;
    std::span<const std::int8_t> out_pixel(int out_pix) const;
    std::span<const std::int8_t> current_row() const { return row_out_; }
    const AccelStats& stats() const { return stats_; }
    AccelStats& stats() { return stats_; }

private:
    void load_codes(InputStream& in, int logical_row, int padded_row, int col_begin, int col_end);

    AccelConfig cfg_;
    ConvInvocation inv_{};
    const WeightBanks* banks_ = nullptr;

    // On-chip structures sized by the configuration maxima.
    std::vector<std::vector<std::int8_t>> weights_;
    std::vector<std::vector<std::int8_t>> bias_;
    LineBuffer linebuf_;
    std::vector<std::int8_t> win_[2];
    std::vector<std::int8_t> out_pix_[2];

    int ho_ = 0;
    int lb_pixel_pt_ = 0;         // codes of the incremental row loaded so far
    int incremental_logical_ = 0;
    int incremental_padded_ = 0;
    int win_target_[2] = {-1, -1};  // output column each window was filled for
    int pix_col_[2] = {-1, -1};     // output column held by each out_pix buffer
    std::vector<std::int8_t> row_out_;
    AccelStats stats_;
};

/// Runs one invocation; throws CapacityError when it does not fit.
QMap accel_conv(const ConvInvocation& inv, const QMap& in, const WeightBanks& banks,
                const AccelConfig& cfg, AccelStats* stats = nullptr);

/// Stand-alone pooling pass streamed through the pool unit.
QMap accel_maxpool(const QMap& in, const PoolSpec& pool);

}  // namespace sqj
