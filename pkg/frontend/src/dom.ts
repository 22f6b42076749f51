/** Minimal DOM helpers; no framework. */

type Child = Node | string | null | undefined;

export function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, unknown> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const el = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (value == null) continue;
    if (key === 'class') el.className = String(value);
    else if (key === 'dataset') Object.assign(el.dataset, value as object);
    else if (key.startsWith('on') && typeof value === 'function') {
      el.addEventListener(key.slice(2).toLowerCase(), value as EventListener);
    } else if (key in el) (el as any)[key] = value;
    else el.setAttribute(key, String(value));
  }
  for (const child of children) {
    if (child == null) continue;
    el.append(child instanceof Node ? child : document.createTextNode(child));
  }
  return el;
}

export function replaceChildren(parent: Element, ...nodes: (Node | string)[]): void {
  parent.replaceChildren(...nodes);
}

/** Dismissible toast carrying the server error code. */
export function toast(container: Element, code: string, message: string): HTMLElement {
  const el = h('div', { class: 'toast', role: 'alert' },
    h('strong', {}, code),
    h('span', {}, ` ${message} `),
    h('button', { class: 'toast-close', onClick: () => el.remove() }, 'x'),
  );
  container.append(el);
  return el;
}
