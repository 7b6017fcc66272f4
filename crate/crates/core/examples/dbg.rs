use scoreauc_core::*;
use scoreauc_core::scoring::fulfillment;
fn main() {
    let p = CostParams::new(2.0, 1.0, 2.0, 0.5, 1.5).unwrap();
    let rule = ScoringRule::pqr();
    let n = 30;
    let g = make_distribution(&DistributionSpec::Uniform, &p, n, n).unwrap();
    // manual BR loop with tracing
    let mut scores: Vec<f64> = (0..n*n).map(|idx| breakeven_contract(&rule, g.node(idx/n, idx%n), 2.0).score).collect();
    let be: Vec<f64> = scores.clone();
    let be_lo = be.iter().cloned().fold(f64::INFINITY, f64::min);
    let be_hi = be.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = be_lo - 2e-3 * (be_hi - be_lo);
    let grid = 1024;
    let step = (be_hi - lo) / (grid - 1) as f64;
    for it in 0..40 {
        // smooth H
        let mut h = vec![0.0; grid];
        {
            use scoreauc_core::numeric::Pchip;
            let df = g.df();
            let (_, _, f_lo_e, f_hi_e) = g.rect();
            for i in 0..n {
                let mut sane: Vec<f64> = (0..n).map(|j| scores[i*n+j]).collect();
                for j in 1..n { if sane[j] >= sane[j-1] { sane[j] = sane[j-1] - 1e-12; } }
                let inv = Pchip::new(sane.iter().rev().cloned().collect(), g.f_nodes().iter().rev().cloned().collect());
                let mut suf = vec![0.0; n+1];
                for j in (0..n).rev() { suf[j] = suf[j+1] + g.cell_mass(i, j); }
                for k in 0..grid {
                    let s = lo + k as f64 * step;
                    let fs = inv.eval(s).clamp(f_lo_e, f_hi_e);
                    let pos = (fs - f_lo_e) / df;
                    let j = (pos.floor() as usize).min(n-1);
                    let frac = (pos - j as f64).clamp(0.0, 1.0);
                    h[k] += suf[j+1] + g.cell_mass(i, j)*(1.0-frac);
                }
            }
        }
        let mut new_scores = scores.clone();
        let mut worst_move = (0.0f64, 0usize);
        for i in 0..n {
            let m = g.m_nodes()[i];
            for j in 0..n {
                let idx = i*n+j;
                let f = g.f_nodes()[j];
                let own = be[idx];
                let kmax = (((own - lo)/step).floor() as usize).min(grid-1);
                let mut best = (f64::NEG_INFINITY, 0usize);
                for k in 0..=kmax {
                    let s = lo + k as f64 * step;
                    let u = match fulfillment(&rule, s, m, 2.0) { Ok((_, v)) => v - f, Err(_) => continue };
                    let o = h[k] * u;
                    if o > best.0 { best = (o, k); }
                }
                let br = if best.0 > 1e-14 { lo + best.1 as f64 * step } else { own };
                let newv = 0.5*scores[idx] + 0.5*br;
                let mv = (newv - scores[idx]).abs();
                if mv > worst_move.0 { worst_move = (mv, idx); }
                new_scores[idx] = newv;
            }
        }
        let sup: f64 = scores.iter().zip(&new_scores).fold(0.0f64, |a, (x, y)| a.max((x-y).abs()));
        scores = new_scores;
        if it % 4 == 0 || it > 34 {
            let (i, j) = (worst_move.1 / n, worst_move.1 % n);
            println!("it {it}: sup {sup:.3e} worst at ({i},{j}) score {:.4}", scores[worst_move.1]);
        }
    }
}
