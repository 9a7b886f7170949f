//! SDR-family metrics, the uPIT permutation search, and evaluation
//! report tables.
//!
//! All metrics accumulate in double precision regardless of the waveform
//! scalar type. Scores are capped near 80 dB by flooring the distortion
//! energy at 1e-8 of the target energy, which keeps losses and reports
//! finite for perfect reconstructions.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative floor applied to distortion denominators (caps scores at
/// 10*log10(1/floor) ~ 80 dB).
pub const SDR_DENOM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    SiSdr,
    SdSdr,
    BssSdr { filter_len: usize },
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::SiSdr => "si-sdr",
            Metric::SdSdr => "sd-sdr",
            Metric::BssSdr { .. } => "bss-sdr",
        }
    }

    pub fn parse(token: &str) -> Result<Metric> {
        match token.trim() {
            "si-sdr" => Ok(Metric::SiSdr),
            "sd-sdr" => Ok(Metric::SdSdr),
            "bss-sdr" => Ok(Metric::BssSdr { filter_len: 512 }),
            other => Err(Error::InvalidArg(format!("unknown metric '{other}'"))),
        }
    }

    pub fn eval<S: Scalar>(&self, est: &[S], reference: &[S]) -> Result<f64> {
        match *self {
            Metric::SiSdr => si_sdr(est, reference),
            Metric::SdSdr => sd_sdr(est, reference),
            Metric::BssSdr { filter_len } => bss_sdr(est, reference, filter_len),
        }
    }
}

/// Intermediate sums shared between the metric and the training loss.
#[derive(Debug, Clone, Copy)]
pub struct SdSdrParts {
    /// <est, ref>
    pub dot: f64,
    /// ||ref||^2
    pub ref_energy: f64,
    /// ||est - ref||^2
    pub err_energy: f64,
    pub value_db: f64,
    pub capped: bool,
}

pub(crate) fn sd_sdr_parts<S: Scalar>(est: &[S], reference: &[S]) -> SdSdrParts {
    let mut dot = 0.0;
    let mut ref_energy = 0.0;
    let mut err_energy = 0.0;
    for (&e, &r) in est.iter().zip(reference) {
        let e = e.to_f64_lossless();
        let r = r.to_f64_lossless();
        dot += e * r;
        ref_energy += r * r;
        err_energy += (e - r) * (e - r);
    }
    let target = dot * dot / ref_energy;
    let floored = err_energy.max(target * SDR_DENOM_FLOOR);
    let capped = err_energy < target * SDR_DENOM_FLOOR;
    let value_db = 10.0 * (target / floored).log10();
    SdSdrParts { dot, ref_energy, err_energy, value_db, capped }
}

fn check_pair<S: Scalar>(est: &[S], reference: &[S]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::InvalidArg(format!(
            "metric length mismatch: {} vs {}",
            est.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|&r| r.to_f64_lossless().powi(2)).sum();
    if ref_energy == 0.0 {
        return Err(Error::ZeroEnergyReference);
    }
    Ok(ref_energy)
}

/// Scale-dependent SDR: the target is `alpha*ref` with
/// `alpha = <est,ref>/||ref||^2`, the distortion is the raw error
/// `est - ref`.
pub fn sd_sdr<S: Scalar>(est: &[S], reference: &[S]) -> Result<f64> {
    check_pair(est, reference)?;
    Ok(sd_sdr_parts(est, reference).value_db)
}

/// Scale-invariant SDR: the distortion is measured against `alpha*ref`.
pub fn si_sdr<S: Scalar>(est: &[S], reference: &[S]) -> Result<f64> {
    let ref_energy = check_pair(est, reference)?;
    let dot: f64 = est
        .iter()
        .zip(reference)
        .map(|(&e, &r)| e.to_f64_lossless() * r.to_f64_lossless())
        .sum();
    let alpha = dot / ref_energy;
    let mut err = 0.0;
    for (&e, &r) in est.iter().zip(reference) {
        let d = e.to_f64_lossless() - alpha * r.to_f64_lossless();
        err += d * d;
    }
    let target = alpha * alpha * ref_energy;
    let floored = err.max(target * SDR_DENOM_FLOOR);
    Ok(10.0 * (target / floored).log10())
}

/// Outcome of the exhaustive assignment search.
#[derive(Debug, Clone)]
pub struct PermutationResult {
    /// `assignment[e]` is the reference index matched to estimate `e`.
    pub assignment: Vec<usize>,
    /// Per-estimate score under the chosen assignment, in dB.
    pub pair_scores: Vec<f64>,
    /// Sum of the per-pair scores.
    pub total: f64,
}

impl PermutationResult {
    pub fn mean_db(&self) -> f64 {
        self.total / self.assignment.len() as f64
    }
}

/// Maximizes the summed metric over all assignments of estimates to
/// references. Ties resolve to the lexicographically smallest assignment.
pub fn upit_score<S: Scalar>(
    ests: &[&[S]],
    refs: &[&[S]],
    metric: Metric,
) -> Result<PermutationResult> {
    let c = ests.len();
    if c == 0 || c != refs.len() {
        return Err(Error::InvalidArg(format!(
            "upit needs matching non-empty sets, got {} estimates and {} references",
            c,
            refs.len()
        )));
    }
    if c > 4 {
        return Err(Error::InvalidArg(format!(
            "upit enumerates assignments factorially; {c} sources exceeds the limit of 4"
        )));
    }
    // Pair score matrix, estimates x references.
    let mut scores = vec![vec![0.0f64; c]; c];
    for (e, est) in ests.iter().enumerate() {
        for (r, reference) in refs.iter().enumerate() {
            scores[e][r] = metric.eval(est, reference)?;
        }
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut perm: Vec<usize> = (0..c).collect();
    loop {
        let total: f64 = perm.iter().enumerate().map(|(e, &r)| scores[e][r]).sum();
        // Strictly-greater keeps the lexicographically first maximizer
        // because permutations are generated in lexicographic order.
        if best.as_ref().map_or(true, |(b, _)| total > *b) {
            best = Some((total, perm.clone()));
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let (total, assignment) = best.expect("at least one permutation");
    let pair_scores = assignment.iter().enumerate().map(|(e, &r)| scores[e][r]).collect();
    Ok(PermutationResult { assignment, pair_scores, total })
}

/// Advances to the next lexicographic permutation; false once exhausted.
fn next_permutation(perm: &mut [usize]) -> bool {
    if perm.len() < 2 {
        return false;
    }
    let mut i = perm.len() - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = perm.len() - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// BSS-eval style SDR: least-squares projection of the estimate onto the
/// span of the reference delayed by `0..filter_len-1` samples.
pub fn bss_sdr<S: Scalar>(est: &[S], reference: &[S], filter_len: usize) -> Result<f64> {
    check_pair(est, reference)?;
    if filter_len == 0 || est.len() < filter_len {
        return Err(Error::InvalidArg(format!(
            "bss_sdr needs 1 <= filter_len <= signal length, got {filter_len} for {}",
            est.len()
        )));
    }
    let n = est.len();
    let f = filter_len;
    let e: Vec<f64> = est.iter().map(|&v| v.to_f64_lossless()).collect();
    let r: Vec<f64> = reference.iter().map(|&v| v.to_f64_lossless()).collect();

    // Gram matrix of delayed references. G[0][j] is the lag-j
    // autocorrelation; the remaining diagonals follow by peeling one
    // trailing product per step down the diagonal.
    let mut gram = vec![0.0f64; f * f];
    for j in 0..f {
        let mut acc = 0.0;
        for t in j..n {
            acc += r[t] * r[t - j];
        }
        gram[j] = acc;
    }
    for i in 1..f {
        for j in i..f {
            gram[i * f + j] = gram[(i - 1) * f + (j - 1)] - r[n - i] * r[n - j];
            gram[j * f + i] = gram[i * f + j];
        }
    }
    for i in 1..f {
        gram[i * f + i] = gram[(i - 1) * f + (i - 1)] - r[n - i] * r[n - i];
    }

    let mut rhs = vec![0.0f64; f];
    for (i, slot) in rhs.iter_mut().enumerate() {
        let mut acc = 0.0;
        for t in i..n {
            acc += e[t] * r[t - i];
        }
        *slot = acc;
    }

    let coeffs = match cholesky_solve(&gram, &rhs, f) {
        Some(c) => c,
        None => {
            let trace: f64 = (0..f).map(|i| gram[i * f + i]).sum();
            let mut ridged = gram.clone();
            for i in 0..f {
                ridged[i * f + i] += 1e-8 * trace;
            }
            cholesky_solve(&ridged, &rhs, f)
                .ok_or_else(|| Error::Numeric("bss_sdr normal equations unsolvable".into()))?
        }
    };

    // At the optimum ||proj||^2 = a.p and ||e - proj||^2 = ||e||^2 - a.p.
    let proj_energy: f64 = coeffs.iter().zip(&rhs).map(|(a, p)| a * p).sum();
    let est_energy: f64 = e.iter().map(|v| v * v).sum();
    let err = (est_energy - proj_energy).max(0.0);
    let num = proj_energy.max(0.0);
    let floored = err.max(num * SDR_DENOM_FLOOR);
    Ok(10.0 * (num / floored).log10())
}

/// Plain Cholesky; `None` if a pivot is not strictly positive.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

/// One evaluated mixture with reference streams.
#[derive(Debug, Clone)]
pub struct EvalExample<S: Scalar> {
    pub id: String,
    pub duration_s: f64,
    pub mixture: Vec<S>,
    pub references: Vec<Vec<S>>,
}

#[derive(Debug, Clone)]
pub struct ExampleEval {
    pub id: String,
    pub duration_s: f64,
    /// Best-permutation mean dB per metric, in `metrics` order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReportCell {
    pub separator: String,
    pub framework: String,
    pub duration_s: f64,
    pub metric: &'static str,
    pub mean_db: f64,
    pub examples: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub separator: String,
    pub framework: String,
    pub metrics: Vec<Metric>,
    pub per_example: Vec<ExampleEval>,
    pub cells: Vec<ReportCell>,
}

/// Scores estimates against references for every example and aggregates
/// mean cells per (separator, framework, duration), one row per metric.
pub fn eval_report<S: Scalar, I>(
    separator: &str,
    framework: &str,
    metrics: &[Metric],
    examples: I,
    mut estimate: impl FnMut(&EvalExample<S>) -> Result<Vec<Vec<S>>>,
) -> Result<EvalReport>
where
    I: IntoIterator<Item = Result<EvalExample<S>>>,
{
    let mut per_example = Vec::new();
    for example in examples {
        let example = example?;
        let ests = estimate(&example)?;
        let est_refs: Vec<&[S]> = ests.iter().map(|v| v.as_slice()).collect();
        let ref_refs: Vec<&[S]> = example.references.iter().map(|v| v.as_slice()).collect();
        let mut values = Vec::with_capacity(metrics.len());
        for metric in metrics {
            let perm = upit_score(&est_refs, &ref_refs, *metric)?;
            values.push(perm.mean_db());
        }
        per_example.push(ExampleEval { id: example.id, duration_s: example.duration_s, values });
    }

    // Group by duration, preserving first-seen order.
    let mut durations: Vec<f64> = Vec::new();
    for ex in &per_example {
        if !durations.iter().any(|d| (d - ex.duration_s).abs() < 1e-9) {
            durations.push(ex.duration_s);
        }
    }
    let mut cells = Vec::new();
    for &duration in &durations {
        let group: Vec<&ExampleEval> = per_example
            .iter()
            .filter(|ex| (ex.duration_s - duration).abs() < 1e-9)
            .collect();
        for (mi, metric) in metrics.iter().enumerate() {
            let mean = group.iter().map(|ex| ex.values[mi]).sum::<f64>() / group.len() as f64;
            cells.push(ReportCell {
                separator: separator.to_string(),
                framework: framework.to_string(),
                duration_s: duration,
                metric: metric.name(),
                mean_db: mean,
                examples: group.len(),
            });
        }
    }
    Ok(EvalReport {
        separator: separator.to_string(),
        framework: framework.to_string(),
        metrics: metrics.to_vec(),
        per_example,
        cells,
    })
}

impl EvalReport {
    /// Comma-separated cells: separator, framework, duration, metric, mean.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("separator,framework,duration_s,metric,mean_db,examples\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.4},{}",
                c.separator, c.framework, c.duration_s, c.metric, c.mean_db, c.examples
            );
        }
        out
    }

    /// Per-example scores as comma-separated rows.
    pub fn per_example_csv(&self) -> String {
        let mut out = String::from("id,duration_s");
        for m in &self.metrics {
            let _ = write!(out, ",{}", m.name());
        }
        out.push('\n');
        for ex in &self.per_example {
            let _ = write!(out, "{},{}", ex.id, ex.duration_s);
            for v in &ex.values {
                let _ = write!(out, ",{v:.4}");
            }
            out.push('\n');
        }
        out
    }

    /// Human-readable aligned table shaped like the result tables:
    /// separator / framework rows with one column per duration.
    pub fn to_table(&self) -> String {
        let mut durations: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !durations.iter().any(|d| (d - c.duration_s).abs() < 1e-9) {
                durations.push(c.duration_s);
            }
        }
        let mut out = String::new();
        let _ = write!(out, "{:<10} {:<10} {:<8}", "Separator", "Framework", "Metric");
        for d in &durations {
            let _ = write!(out, " {:>12}", format!("{d} sec."));
        }
        out.push('\n');
        let width = 30 + 13 * durations.len();
        out.push_str(&"-".repeat(width));
        out.push('\n');
        for metric in &self.metrics {
            let _ = write!(out, "{:<10} {:<10} {:<8}", self.separator, self.framework, metric.name());
            for d in &durations {
                let cell = self
                    .cells
                    .iter()
                    .find(|c| c.metric == metric.name() && (c.duration_s - d).abs() < 1e-9);
                match cell {
                    Some(c) => {
                        let _ = write!(out, " {:>12.2}", c.mean_db);
                    }
                    None => {
                        let _ = write!(out, " {:>12}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn orthogonalize(noise: &mut [f64], reference: &[f64]) {
        let dot: f64 = noise.iter().zip(reference).map(|(a, b)| a * b).sum();
        let energy: f64 = reference.iter().map(|r| r * r).sum();
        for (n, r) in noise.iter_mut().zip(reference) {
            *n -= dot / energy * r;
        }
    }

    #[test]
    fn sd_sdr_identity_is_capped() {
        let r = vec![0.5f64, -0.25, 0.125, 0.9];
        let v = sd_sdr(&r, &r).unwrap();
        assert!((v - 80.0).abs() < 1e-9, "capped at ~80 dB, got {v}");
    }

    #[test]
    fn sd_sdr_half_scale_is_zero_db() {
        let r = vec![0.3f64, -0.7, 0.2, 0.5, -0.1];
        let e: Vec<f64> = r.iter().map(|v| 0.5 * v).collect();
        let v = sd_sdr(&e, &r).unwrap();
        assert!(v.abs() < 1e-12, "got {v}");
    }

    #[test]
    fn sd_sdr_orthogonal_noise_at_minus_10db() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let r: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut n: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
        orthogonalize(&mut n, &r);
        let r_energy: f64 = r.iter().map(|v| v * v).sum();
        let n_energy: f64 = n.iter().map(|v| v * v).sum();
        let scale = (r_energy / (10.0 * n_energy)).sqrt();
        let e: Vec<f64> = r.iter().zip(&n).map(|(rv, nv)| rv + scale * nv).collect();
        let v = sd_sdr(&e, &r).unwrap();
        assert!((v - 10.0).abs() < 1e-9, "got {v}");
        let si = si_sdr(&e, &r).unwrap();
        assert!((si - 10.0).abs() < 1e-9, "got {si}");
    }

    #[test]
    fn si_sdr_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let r: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for a in [0.1, 1.0, 7.5] {
            let e: Vec<f64> = r.iter().map(|v| a * v).collect();
            let v = si_sdr(&e, &r).unwrap();
            assert!((v - 80.0).abs() < 1e-9, "scale {a} gave {v}");
        }
    }

    #[test]
    fn si_sdr_dominates_sd_sdr() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let r: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let si = si_sdr(&e, &r).unwrap();
            let sd = sd_sdr(&e, &r).unwrap();
            assert!(si >= sd - 1e-12, "si {si} < sd {sd}");
        }
    }

    #[test]
    fn sd_sdr_invariant_under_joint_sign_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let r: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let flipped_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let flipped_e: Vec<f64> = e.iter().map(|v| -v).collect();
        let a = sd_sdr(&e, &r).unwrap();
        let b = sd_sdr(&flipped_e, &flipped_r).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn metrics_reject_silent_reference_and_length_mismatch() {
        let z = vec![0.0f64; 8];
        let e = vec![1.0f64; 8];
        assert!(matches!(sd_sdr(&e, &z), Err(Error::ZeroEnergyReference)));
        assert!(si_sdr(&e, &z).is_err());
        assert!(sd_sdr(&e, &z[..4]).is_err());
    }

    #[test]
    fn upit_swapped_pair_picks_the_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let a: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let res =
            upit_score(&[&b[..], &a[..]], &[&a[..], &b[..]], Metric::SdSdr).unwrap();
        assert_eq!(res.assignment, vec![1, 0]);
        assert!((res.total - 160.0).abs() < 1e-6, "two capped pairs, got {}", res.total);
    }

    #[test]
    fn upit_total_invariant_under_reference_shuffle() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let sigs: Vec<Vec<f64>> =
            (0..3).map(|_| (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ests: Vec<Vec<f64>> =
            (0..3).map(|_| (0..96).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let e: Vec<&[f64]> = ests.iter().map(|v| v.as_slice()).collect();
        let r0: Vec<&[f64]> = sigs.iter().map(|v| v.as_slice()).collect();
        let r1: Vec<&[f64]> = vec![&sigs[2], &sigs[0], &sigs[1]];
        let t0 = upit_score(&e, &r0, Metric::SiSdr).unwrap().total;
        let t1 = upit_score(&e, &r1, Metric::SiSdr).unwrap().total;
        assert!((t0 - t1).abs() < 1e-9);
    }

    #[test]
    fn upit_rejects_too_many_sources() {
        let s = vec![1.0f64; 4];
        let refs: Vec<&[f64]> = vec![&s; 5];
        assert!(upit_score(&refs, &refs, Metric::SiSdr).is_err());
    }

    #[test]
    fn bss_sdr_identity_with_unit_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let r: Vec<f64> = (0..600).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = bss_sdr(&r, &r, 1).unwrap();
        assert!((v - 80.0).abs() < 1e-6, "got {v}");
    }

    #[test]
    fn bss_sdr_recovers_fir_filtered_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let r: Vec<f64> = (0..2000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fir: Vec<f64> = (0..100).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let mut e = vec![0.0f64; r.len()];
        for (t, slot) in e.iter_mut().enumerate() {
            for (w, &c) in fir.iter().enumerate() {
                if t >= w {
                    *slot += c * r[t - w];
                }
            }
        }
        let v = bss_sdr(&e, &r, 128).unwrap();
        assert!(v > 79.0, "filter inside the span should cap, got {v}");
    }

    #[test]
    fn bss_sdr_orthogonal_noise_is_very_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let r: Vec<f64> = (0..1500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e: Vec<f64> = (0..1500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = bss_sdr(&e, &r, 64).unwrap();
        assert!(v < -20.0, "independent noise projects weakly, got {v}");
    }

    #[test]
    fn bss_sdr_dominates_si_sdr() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..10 {
            let r: Vec<f64> = (0..800).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e: Vec<f64> =
                r.iter().map(|v| 0.8 * v + rng.gen_range(-0.3..0.3)).collect::<Vec<_>>();
            let b = bss_sdr(&e, &r, 32).unwrap();
            let s = si_sdr(&e, &r).unwrap();
            assert!(b >= s - 1e-6, "bss {b} < si {s}");
        }
    }

    #[test]
    fn eval_report_oracle_estimates_hit_the_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let examples: Vec<crate::error::Result<EvalExample<f64>>> = (0..3)
            .map(|i| {
                let refs: Vec<Vec<f64>> = (0..2)
                    .map(|_| (0..256).map(|_| rng.gen_range(-0.5..0.5)).collect())
                    .collect();
                let mixture = refs[0].iter().zip(&refs[1]).map(|(a, b)| a + b).collect();
                Ok(EvalExample {
                    id: format!("ex{i}"),
                    duration_s: 4.0,
                    mixture,
                    references: refs,
                })
            })
            .collect();
        let report = eval_report(
            "mprnn",
            "2-output",
            &[Metric::SiSdr, Metric::SdSdr],
            examples,
            |ex| Ok(ex.references.clone()),
        )
        .unwrap();
        assert_eq!(report.cells.len(), 2);
        for cell in &report.cells {
            assert!((cell.mean_db - 80.0).abs() < 1e-9);
            assert_eq!(cell.examples, 3);
        }
        // Mean equals the arithmetic mean of per-example scores.
        for (mi, _) in report.metrics.iter().enumerate() {
            let mean: f64 = report.per_example.iter().map(|e| e.values[mi]).sum::<f64>() / 3.0;
            assert!((mean - report.cells[mi].mean_db).abs() < 1e-9);
        }
        let csv = report.to_csv();
        assert!(csv.starts_with("separator,framework,duration_s,metric,mean_db,examples"));
        assert!(csv.contains("mprnn,2-output,4,si-sdr"));
        let table = report.to_table();
        assert!(table.contains("Separator") && table.contains("4 sec."));
    }
}
