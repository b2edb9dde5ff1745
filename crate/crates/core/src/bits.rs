//! Parallel bit deposit and extract.
//!
//! The portable routines walk the set bits of the mask. On x86-64 CPUs with
//! BMI2 the `PDEP`/`PEXT` instructions are used instead; both paths produce
//! identical results for every input.

/// Scatters the low bits of `value` into the positions selected by `mask`,
/// lowest mask bit first.
#[inline]
pub fn deposit_soft(value: u64, mut mask: u64) -> u64 {
    let mut out = 0u64;
    let mut src = value;
    while mask != 0 {
        let lowest = mask & mask.wrapping_neg();
        if src & 1 != 0 {
            out |= lowest;
        }
        src >>= 1;
        mask &= mask - 1;
    }
    out
}

/// Gathers the bits of `value` selected by `mask` into the low bits of the
/// result. Inverse of [`deposit_soft`] on the mask's positions.
#[inline]
pub fn extract_soft(value: u64, mut mask: u64) -> u64 {
    let mut out = 0u64;
    let mut bit = 0u32;
    while mask != 0 {
        let lowest = mask & mask.wrapping_neg();
        if value & lowest != 0 {
            out |= 1 << bit;
        }
        bit += 1;
        mask &= mask - 1;
    }
    out
}

#[cfg(target_arch = "x86_64")]
mod hw {
    use std::sync::atomic::{AtomicU8, Ordering};

    // 0 = not yet probed, 1 = absent, 2 = present. Racing probes agree.
    static BMI2: AtomicU8 = AtomicU8::new(0);

    #[inline(always)]
    pub fn available() -> bool {
        match BMI2.load(Ordering::Relaxed) {
            0 => probe(),
            state => state == 2,
        }
    }

    #[cold]
    fn probe() -> bool {
        let present = std::is_x86_feature_detected!("bmi2");
        BMI2.store(if present { 2 } else { 1 }, Ordering::Relaxed);
        present
    }

    #[target_feature(enable = "bmi2")]
    pub unsafe fn pdep(value: u64, mask: u64) -> u64 {
        core::arch::x86_64::_pdep_u64(value, mask)
    }

    #[target_feature(enable = "bmi2")]
    pub unsafe fn pext(value: u64, mask: u64) -> u64 {
        core::arch::x86_64::_pext_u64(value, mask)
    }

    #[target_feature(enable = "bmi2")]
    pub unsafe fn interleave(values: &[u64], masks: &[u64]) -> u64 {
        use core::arch::x86_64::_pdep_u64 as pdep;
        // Short fixed-length cases dominate; spell them out.
        match (values, masks) {
            ([a], [ma]) => pdep(*a, *ma),
            ([a, b], [ma, mb]) => pdep(*a, *ma) | pdep(*b, *mb),
            ([a, b, c], [ma, mb, mc]) => pdep(*a, *ma) | pdep(*b, *mb) | pdep(*c, *mc),
            _ => values.iter().zip(masks).fold(0, |acc, (&v, &m)| acc | pdep(v, m)),
        }
    }

    #[target_feature(enable = "bmi2")]
    pub unsafe fn deinterleave(value: u64, masks: &[u64], out: &mut [u64]) {
        use core::arch::x86_64::_pext_u64 as pext;
        match (out, masks) {
            ([a], [ma]) => *a = pext(value, *ma),
            ([a, b], [ma, mb]) => {
                *a = pext(value, *ma);
                *b = pext(value, *mb);
            }
            ([a, b, c], [ma, mb, mc]) => {
                *a = pext(value, *ma);
                *b = pext(value, *mb);
                *c = pext(value, *mc);
            }
            (out, masks) => {
                for (o, &m) in out.iter_mut().zip(masks) {
                    *o = pext(value, m);
                }
            }
        }
    }
}

/// Whether the hardware deposit/extract path is in use on this machine.
pub fn hardware_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        hw::available()
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

/// Bit deposit, using `PDEP` when the CPU supports it.
#[inline]
pub fn deposit(value: u64, mask: u64) -> u64 {
    #[cfg(target_arch = "x86_64")]
    {
        if hw::available() {
            // SAFETY: BMI2 support was checked at runtime.
            return unsafe { hw::pdep(value, mask) };
        }
    }
    deposit_soft(value, mask)
}

/// Bit extract, using `PEXT` when the CPU supports it.
#[inline]
pub fn extract(value: u64, mask: u64) -> u64 {
    #[cfg(target_arch = "x86_64")]
    {
        if hw::available() {
            // SAFETY: BMI2 support was checked at runtime.
            return unsafe { hw::pext(value, mask) };
        }
    }
    extract_soft(value, mask)
}

/// OR of `deposit(values[i], masks[i])` over all pairs, with a single
/// dispatch for the whole batch.
#[inline]
pub fn interleave(values: &[u64], masks: &[u64]) -> u64 {
    #[cfg(target_arch = "x86_64")]
    {
        if hw::available() {
            // SAFETY: BMI2 support was checked at runtime.
            return unsafe { hw::interleave(values, masks) };
        }
    }
    values
        .iter()
        .zip(masks)
        .fold(0, |acc, (&v, &m)| acc | deposit_soft(v, m))
}

/// Writes `extract(value, masks[i])` to `out[i]` for every pair.
#[inline]
pub fn deinterleave(value: u64, masks: &[u64], out: &mut [u64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if hw::available() {
            // SAFETY: BMI2 support was checked at runtime.
            return unsafe { hw::deinterleave(value, masks, out) };
        }
    }
    for (o, &m) in out.iter_mut().zip(masks) {
        *o = extract_soft(value, m);
    }
}
