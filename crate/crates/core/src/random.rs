//! Random series/parallel circuits of linear elements, for oracle and bench runs.

use rand::Rng;

use crate::devices::{Characteristic, DeviceClass, DeviceSpec, SourceWaveform};
use crate::netlist::{Circuit, CircuitBuilder};
use crate::topology::check_wellposed;

struct Gen<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    builder: CircuitBuilder,
    nodes: usize,
    counts: [usize; 6],
}

const CLASSES: [DeviceClass; 6] = [
    DeviceClass::Resistor,
    DeviceClass::Conductor,
    DeviceClass::Capacitor,
    DeviceClass::Inductor,
    DeviceClass::VSource,
    DeviceClass::ISource,
];

impl<R: Rng + ?Sized> Gen<'_, R> {
    fn fresh_node(&mut self) -> String {
        self.nodes += 1;
        format!("n{}", self.nodes)
    }

    fn element(&mut self, a: &str, b: &str) {
        let roll = self.rng.gen_range(0..20);
        let k = match roll {
            0..=3 => 0,
            4..=7 => 1,
            8..=11 => 2,
            12..=15 => 3,
            16..=17 => 4,
            _ => 5,
        };
        let class = CLASSES[k];
        self.counts[k] += 1;
        let name = format!("{}{}", class.keyword(), self.counts[k]);
        let value = self.rng.gen_range(0.1..=10.0);
        let device = if class.is_source() {
            DeviceSpec::source(name, class, SourceWaveform::Dc(value))
        } else {
            DeviceSpec::with_characteristic(
                name,
                Characteristic::linear(class, value).expect("linear class"),
            )
        };
        self.builder.add(device, a, b);
    }

    fn network(&mut self, a: &str, b: &str, leaves: usize) {
        if leaves == 1 {
            self.element(a, b);
            return;
        }
        let left = self.rng.gen_range(1..leaves);
        if self.rng.gen_bool(0.5) {
            let m = self.fresh_node();
            self.network(a, &m, left);
            self.network(&m, b, leaves - left);
        } else {
            self.network(a, b, left);
            self.network(a, b, leaves - left);
        }
    }
}

/// A well-posed circuit with 2..=`max_elements` R/G/C/L/V/I branches, values uniform in [0.1, 10].
pub fn random_linear_circuit<R: Rng + ?Sized>(rng: &mut R, max_elements: usize) -> Circuit {
    assert!(max_elements >= 2);
    loop {
        let leaves = rng.gen_range(2..=max_elements);
        let mut gen = Gen {
            rng: &mut *rng,
            builder: CircuitBuilder::new(),
            nodes: 0,
            counts: [0; 6],
        };
        gen.network("1", "0", leaves);
        let circuit = gen
            .builder
            .build("0")
            .expect("series/parallel networks are connected");
        if check_wellposed(&circuit).is_ok() {
            return circuit;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_circuits_are_well_posed_and_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let c = random_linear_circuit(&mut a, 8);
            assert!(check_wellposed(&c).is_ok());
            assert_eq!(c, random_linear_circuit(&mut b, 8));
            assert!(c.branches().len() <= 8);
        }
    }
}
