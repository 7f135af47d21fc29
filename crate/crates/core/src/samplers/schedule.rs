/// Update order for one Gibbs sweep over `x_1, …, x_n` (1-based times).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub odd: Vec<usize>,
    pub even: Vec<usize>,
    pub endpoint: usize,
}

/// Odd times `1, 3, …` and even times `2, 4, …` below `n`; `x_n` always goes
/// through the endpoint update. Members of one list share no interval.
pub fn odd_even_schedule(n: usize) -> Schedule {
    let interior = 1..n;
    Schedule {
        odd: interior.clone().filter(|t| t % 2 == 1).collect(),
        even: interior.filter(|t| t % 2 == 0).collect(),
        endpoint: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let s = odd_even_schedule(4);
        assert_eq!((s.odd, s.even, s.endpoint), (vec![1, 3], vec![2], 4));
        let s = odd_even_schedule(2);
        assert_eq!((s.odd, s.even, s.endpoint), (vec![1], vec![], 2));
        let s = odd_even_schedule(5);
        assert_eq!((s.odd, s.even, s.endpoint), (vec![1, 3], vec![2, 4], 5));
    }

    #[test]
    fn sweeps_partition_interior_times() {
        for n in 2..=20 {
            let s = odd_even_schedule(n);
            let mut all: Vec<usize> = s.odd.iter().chain(&s.even).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (1..n).collect::<Vec<_>>());
            for w in s.odd.windows(2).chain(s.even.windows(2)) {
                assert!(w[1] - w[0] >= 2);
            }
        }
    }
}
