// Non-blocking error toasts; they stack and auto-dismiss.

export function showToast(container: HTMLElement, message: string, ttlMs = 4000): void {
  const el = document.createElement('div');
  el.className = 'toast';
  el.textContent = message;
  container.appendChild(el);
  setTimeout(() => el.remove(), ttlMs);
}
